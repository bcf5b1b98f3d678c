//! Command-line front end. Every subcommand is also a `Command` value, so
//! `coarsekit run --config file.json` executes exactly what the flags would.
//!
//! Exit codes: 0 ok, 1 bad input or failed precondition, 2 a check did not
//! hold, 3 a search ran out of seeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::calculus::{half_line_cover, line_interval_cover, scale_ladder, star_merge, stop_index, telescope};
use crate::certify::{brick_certificate, product_certificate, search_certificate, verify_cert, ANCertificate, ParabolicConfig, VerifyReport};
use crate::cone::{cone_distance, exp_sequence, gap_claim_check, ray_pair, required_growth, xi_separation, RayPair};
use crate::covers::{cover_stats, Cover, SetFamily, WitnessConfig};
use crate::error::Error;
use crate::nerve::{projection, skeleton_push, BoundaryCandidate, Coords};
use crate::report::{canonical_json, config_hash, csv_string, num, svg_plot, write_atomic, yes, Report, Series, SCHEMA_VERSION};
use crate::space::{Group, MetricWindow, SpaceRecipe};
use crate::sublinear::{control_profile, default_r_grid, divergence_witness, urysohn_phi, Relation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CHECK: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "coarsekit", version, about = "Covers, sublinear control and dimension certificates on finite metric windows")]
pub struct Cli {
    /// Directory receiving the artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub top: Top,
}

#[derive(Subcommand, Debug)]
pub enum Top {
    /// Metric windows
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Cover statistics, star merge and telescopes
    #[command(subcommand)]
    Cover(CoverCmd),
    /// Control profiles, divergence and Urysohn functions
    #[command(subcommand)]
    Sublinear(SublinearCmd),
    /// Nerve projection and skeleton push
    #[command(subcommand)]
    Nerve(NerveCmd),
    /// Dimension certificates
    #[command(subcommand)]
    Certify(CertifyCmd),
    /// Sequences on rays and their traces
    #[command(subcommand)]
    Cone(ConeCmd),
    /// Run the command described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum SpaceCmd {
    /// Build a window from a recipe and check the triangle inequality.
    Build(SpaceBuild),
}

#[derive(Subcommand, Debug)]
pub enum CoverCmd {
    /// Mesh, multiplicity and Lebesgue number of a cover.
    Stats(CoverStatsArgs),
    /// Star merge of a fine cover into a coarse one over a key set.
    Merge(InputFile),
    /// Telescope of interval covers on a ℤ window.
    Telescope(TelescopeArgs),
}

#[derive(Subcommand, Debug)]
pub enum SublinearCmd {
    /// Control profile of a relation.
    Profile(InputFile),
    /// Linear divergence witness for a family of sets.
    Diverge(DivergeArgs),
    /// Urysohn function of two sets.
    Phi(PhiArgs),
}

#[derive(Subcommand, Debug)]
pub enum NerveCmd {
    /// Barycentric projection onto the nerve.
    Project(CoverInput),
    /// Push the projection off its top simplices.
    Push(PushArgs),
}

#[derive(Subcommand, Debug)]
pub enum CertifyCmd {
    /// Brick certificate for a standard ℤ^d window.
    Brick(BrickArgs),
    /// Greedy certificate search over seeds.
    Search(SearchArgs),
    /// Verify a certificate file.
    Verify(CertInput),
    /// Certificate for the product of a certified window with the line.
    Product(ProductArgs),
    /// Parabolic region against its ray at three radii.
    Parabolic(ParabolicArgs),
}

#[derive(Subcommand, Debug)]
pub enum ConeCmd {
    /// Exponentially growing index sequence.
    Seq(SeqArgs),
    /// Gap inequalities for two sequences on rays.
    Gap(RayArgs),
    /// Divergence witness for the traces of two sequences on rays.
    Xi(RayArgs),
}

fn d_bins() -> usize {
    16
}
fn d_radius_telescope() -> f64 {
    800.0
}
fn d_c_telescope() -> f64 {
    4.5
}
fn d_half() -> f64 {
    0.5
}
fn d_r0_telescope() -> f64 {
    0.04
}
fn d_margin() -> f64 {
    0.1
}
fn d_overlap() -> i64 {
    3
}
fn d_threshold() -> f64 {
    1e-3
}
fn d_steps() -> usize {
    16
}
fn d_one() -> f64 {
    1.0
}
fn d_seeds() -> Vec<u64> {
    (0..8).collect()
}
fn d_parabolic_radius() -> f64 {
    100.0
}
fn d_parabolic_r() -> f64 {
    1.5
}
fn d_ten() -> f64 {
    10.0
}
fn d_eight() -> u64 {
    8
}
fn d_start() -> u64 {
    1
}
fn d_len() -> usize {
    10
}
fn d_v() -> f64 {
    2.0
}
fn d_jitter() -> f64 {
    0.5
}
fn d_tail() -> usize {
    3
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceBuild {
    /// Recipe file `{schema_version, recipe}`.
    #[arg(long)]
    pub recipe: PathBuf,
    /// Also list every label with its norm.
    #[arg(long)]
    #[serde(default)]
    pub points: bool,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverInput {
    /// Cover file `{schema_version, window, members}`.
    #[arg(long)]
    pub cover: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverStatsArgs {
    #[arg(long)]
    pub cover: PathBuf,
    /// Annuli in the Lebesgue profile.
    #[arg(long, default_value_t = d_bins())]
    #[serde(default = "d_bins")]
    pub bins: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelescopeArgs {
    #[arg(long, default_value_t = d_radius_telescope())]
    #[serde(default = "d_radius_telescope")]
    pub radius: f64,
    #[arg(long, default_value_t = d_c_telescope())]
    #[serde(default = "d_c_telescope")]
    pub c: f64,
    #[arg(long, default_value_t = d_half())]
    #[serde(default = "d_half")]
    pub d: f64,
    #[arg(long, default_value_t = d_r0_telescope())]
    #[serde(default = "d_r0_telescope")]
    pub r0: f64,
    #[arg(long, default_value_t = d_margin())]
    #[serde(default = "d_margin")]
    pub margin: f64,
    /// Overlap of the two half-lines of the target cover.
    #[arg(long, default_value_t = d_overlap())]
    #[serde(default = "d_overlap")]
    pub overlap: i64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergeArgs {
    /// Sets file `{schema_version, window, sets}`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = d_threshold())]
    #[serde(default = "d_threshold")]
    pub threshold: f64,
    #[arg(long, default_value_t = d_margin())]
    #[serde(default = "d_margin")]
    pub margin: f64,
    #[arg(long, default_value_t = d_steps())]
    #[serde(default = "d_steps")]
    pub steps: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiArgs {
    /// Sets file with exactly two sets, A then B.
    #[arg(long)]
    pub input: PathBuf,
    /// Separation constant to check the seminorm bound against.
    #[arg(long)]
    #[serde(default)]
    pub c: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateArg {
    Radial,
    NearestBoundary,
    Auto,
}

impl From<CandidateArg> for BoundaryCandidate {
    fn from(c: CandidateArg) -> Self {
        match c {
            CandidateArg::Radial => BoundaryCandidate::Radial,
            CandidateArg::NearestBoundary => BoundaryCandidate::NearestBoundary,
            CandidateArg::Auto => BoundaryCandidate::Auto,
        }
    }
}

fn d_candidate() -> CandidateArg {
    CandidateArg::Auto
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushArgs {
    #[arg(long)]
    pub cover: PathBuf,
    #[arg(long, value_enum, default_value_t = CandidateArg::Auto)]
    #[serde(default = "d_candidate")]
    pub candidate: CandidateArg,
    /// Simplex dimension to push off; the nerve dimension by default.
    #[arg(long)]
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrickArgs {
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long, default_value_t = d_one())]
    #[serde(default = "d_one")]
    pub r0: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchArgs {
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = d_one())]
    #[serde(default = "d_one")]
    pub r0: f64,
    #[arg(long, value_delimiter = ',', default_values_t = d_seeds())]
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertInput {
    #[arg(long)]
    pub cert: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductArgs {
    #[arg(long)]
    pub cert: PathBuf,
    /// Radius of the product window.
    #[arg(long)]
    pub radius: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicArgs {
    /// Smallest of the three radii (then 2x and 4x).
    #[arg(long, default_value_t = d_parabolic_radius())]
    #[serde(default = "d_parabolic_radius")]
    pub radius: f64,
    #[arg(long, default_value_t = d_parabolic_r())]
    #[serde(default = "d_parabolic_r")]
    pub r: f64,
    #[arg(long, default_value_t = d_ten())]
    #[serde(default = "d_ten")]
    pub c: f64,
    #[arg(long, default_value_t = d_eight())]
    #[serde(default = "d_eight")]
    pub seeds: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long, default_value_t = d_start())]
    #[serde(default = "d_start")]
    pub start: u64,
    #[arg(long, default_value_t = d_len())]
    #[serde(default = "d_len")]
    pub len: usize,
}

/// Two sequences on rays of the plane; shared by `cone gap` and `cone xi`.
#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayArgs {
    /// Growth of the index set; the smallest admissible value when absent.
    #[arg(long)]
    #[serde(default)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = d_start())]
    #[serde(default = "d_start")]
    pub start: u64,
    #[arg(long, default_value_t = d_len())]
    #[serde(default = "d_len")]
    pub len: usize,
    /// Angle of the first ray, radians.
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    pub u: f64,
    #[arg(long, default_value_t = d_one())]
    #[serde(default = "d_one")]
    pub d1: f64,
    #[arg(long, default_value_t = d_v())]
    #[serde(default = "d_v")]
    pub v: f64,
    #[arg(long, default_value_t = d_one())]
    #[serde(default = "d_one")]
    pub d2: f64,
    #[arg(long, default_value_t = d_margin())]
    #[serde(default = "d_margin")]
    pub delta: f64,
    #[arg(long, default_value_t = d_jitter())]
    #[serde(default = "d_jitter")]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Tail length of the distance estimate (gap only).
    #[arg(long, default_value_t = d_tail())]
    #[serde(default = "d_tail")]
    pub tail: usize,
    /// Lower bound on d(x_n, y_n)/n (xi only).
    #[arg(long, default_value_t = d_margin())]
    #[serde(default = "d_margin")]
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    SpaceBuild(SpaceBuild),
    CoverStats(CoverStatsArgs),
    CoverMerge(InputFile),
    CoverTelescope(TelescopeArgs),
    SublinearProfile(InputFile),
    SublinearDiverge(DivergeArgs),
    SublinearPhi(PhiArgs),
    NerveProject(CoverInput),
    NervePush(PushArgs),
    CertifyBrick(BrickArgs),
    CertifySearch(SearchArgs),
    CertifyVerify(CertInput),
    CertifyProduct(ProductArgs),
    CertifyParabolic(ParabolicArgs),
    ConeSeq(SeqArgs),
    ConeGap(RayArgs),
    ConeXi(RayArgs),
}

impl Command {
    pub fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.get("command").and_then(Value::as_str).map(String::from)).unwrap_or_default()
    }
}

/// Contents of a `run --config` file. Relative paths resolve against the
/// working directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub run: Command,
}

impl Top {
    fn into_command(self) -> Option<Command> {
        Some(match self {
            Top::Space(SpaceCmd::Build(a)) => Command::SpaceBuild(a),
            Top::Cover(CoverCmd::Stats(a)) => Command::CoverStats(a),
            Top::Cover(CoverCmd::Merge(a)) => Command::CoverMerge(a),
            Top::Cover(CoverCmd::Telescope(a)) => Command::CoverTelescope(a),
            Top::Sublinear(SublinearCmd::Profile(a)) => Command::SublinearProfile(a),
            Top::Sublinear(SublinearCmd::Diverge(a)) => Command::SublinearDiverge(a),
            Top::Sublinear(SublinearCmd::Phi(a)) => Command::SublinearPhi(a),
            Top::Nerve(NerveCmd::Project(a)) => Command::NerveProject(a),
            Top::Nerve(NerveCmd::Push(a)) => Command::NervePush(a),
            Top::Certify(CertifyCmd::Brick(a)) => Command::CertifyBrick(a),
            Top::Certify(CertifyCmd::Search(a)) => Command::CertifySearch(a),
            Top::Certify(CertifyCmd::Verify(a)) => Command::CertifyVerify(a),
            Top::Certify(CertifyCmd::Product(a)) => Command::CertifyProduct(a),
            Top::Certify(CertifyCmd::Parabolic(a)) => Command::CertifyParabolic(a),
            Top::Cone(ConeCmd::Seq(a)) => Command::ConeSeq(a),
            Top::Cone(ConeCmd::Gap(a)) => Command::ConeGap(a),
            Top::Cone(ConeCmd::Xi(a)) => Command::ConeXi(a),
            Top::Run { .. } => return None,
        })
    }
}

// ==== input files ====

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeFile {
    pub schema_version: u32,
    pub recipe: SpaceRecipe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverFile {
    pub schema_version: u32,
    pub window: SpaceRecipe,
    pub members: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeFile {
    pub schema_version: u32,
    pub window: SpaceRecipe,
    pub fine: Vec<Vec<String>>,
    pub coarse: Vec<Vec<String>>,
    pub key: Vec<String>,
}

/// Pairs are (y, x): the relation relates y to x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFile {
    pub schema_version: u32,
    pub window: SpaceRecipe,
    pub pairs: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsFile {
    pub schema_version: u32,
    pub window: SpaceRecipe,
    pub sets: Vec<Vec<String>>,
}

// ==== errors ====

/// Failure envelope; `pointer` is a JSON pointer into the offending input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliError {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointer: Option<String>,
}

impl CliError {
    fn input(kind: &str, message: impl Into<String>, pointer: Option<String>) -> Self {
        CliError { exit_code: EXIT_INPUT, kind: kind.into(), message: message.into(), pointer }
    }

    fn at(mut self, pointer: &str) -> Self {
        self.pointer.get_or_insert_with(|| pointer.to_string());
        self
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::UnknownPoint(_) => "unknown-point",
            Error::Disconnected(_) => "disconnected",
            Error::TooLarge { .. } => "too-large",
            Error::Invalid(_) => "invalid",
            Error::Precondition(_) => "precondition",
            Error::Verification(_) => "verification",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        };
        let exit_code = if matches!(e, Error::Verification(_)) { EXIT_CHECK } else { EXIT_INPUT };
        CliError { exit_code, kind: kind.into(), message: e.to_string(), pointer: None }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => s.push_str(&format!("/{index}")),
            Segment::Map { key } => s.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => s.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    s
}

/// Deserializes with a JSON pointer to the first offending value.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8], what: &str) -> CliResult<T> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| CliError::input("parse", format!("{what}: {e}"), Some(String::new())))?;
    match value.get("schema_version") {
        None => return Err(CliError::input("schema", format!("{what}: missing schema_version"), Some("/schema_version".into()))),
        Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
            return Err(CliError::input("schema", format!("{what}: schema_version {v} is not {SCHEMA_VERSION}"), Some("/schema_version".into())))
        }
        _ => {}
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let p = pointer_of(e.path());
        // Missing fields are reported at their parent; name them in the pointer.
        let inner = e.inner().to_string();
        let p = match inner.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(field) => format!("{p}/{field}"),
            None => p,
        };
        CliError::input("schema", format!("{what}: {inner}"), Some(p))
    })
}

/// Reads input files and keeps their bytes for the config hash.
#[derive(Default)]
struct Inputs {
    bytes: Vec<Vec<u8>>,
}

impl Inputs {
    fn load<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let bytes = fs::read(path).map_err(|e| CliError::input("io", format!("{}: {e}", path.display()), None))?;
        let v = parse_json(&bytes, &path.display().to_string())?;
        self.bytes.push(bytes);
        Ok(v)
    }
}

fn window(recipe: &SpaceRecipe) -> CliResult<MetricWindow> {
    MetricWindow::build(recipe).map_err(|e| CliError::from(e).at("/window"))
}

fn ids(w: &MetricWindow, labels: &[String], pointer: &str) -> CliResult<Vec<usize>> {
    labels.iter().enumerate().map(|(j, l)| w.id(l).map_err(|e| CliError::from(e).at(&format!("{pointer}/{j}")))).collect()
}

fn family(w: &MetricWindow, members: &[Vec<String>], pointer: &str) -> CliResult<Cover> {
    if members.is_empty() {
        return Err(CliError::input("invalid", "a cover needs at least one member", Some(pointer.into())));
    }
    let mut out = Vec::with_capacity(members.len());
    for (i, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(CliError::input("invalid", format!("member {i} is empty"), Some(format!("{pointer}/{i}"))));
        }
        out.push(ids(w, m, &format!("{pointer}/{i}"))?);
    }
    SetFamily::new(out).map_err(|e| CliError::from(e).at(pointer))
}

fn cover(w: &MetricWindow, members: &[Vec<String>], pointer: &str) -> CliResult<Cover> {
    let c = family(w, members, pointer)?;
    if let Some(p) = c.uncovered(w.len()) {
        return Err(CliError::input("invalid", format!("point {} lies in no member", w.label(p)), Some(pointer.into())));
    }
    Ok(c)
}

// ==== execution ====

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    CheckFailed,
    Exhausted,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::CheckFailed => EXIT_CHECK,
            Status::Exhausted => EXIT_EXHAUSTED,
        }
    }

    fn from_check(ok: bool) -> Self {
        if ok {
            Status::Ok
        } else {
            Status::CheckFailed
        }
    }
}

/// What one command produced before anything is written.
struct Done {
    status: Status,
    result: Value,
    report: Report,
    /// Extra artifacts as (file name, bytes).
    extra: Vec<(String, Vec<u8>)>,
}

/// Summary printed on stdout after a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub command: String,
    pub status: Status,
    pub exit_code: i32,
    pub config_hash: String,
    pub artifacts: Vec<String>,
}

/// Runs `cfg`, writing `<command>.json`, `<command>.md` and any extra
/// artifacts into `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> CliResult<RunSummary> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::input("schema", format!("schema_version {} is not {SCHEMA_VERSION}", cfg.schema_version), Some("/schema_version".into())));
    }
    let name = cfg.run.name();
    let mut inputs = Inputs::default();
    // Inputs are read before hashing, so the hash sees their bytes.
    let pending = prepare(&cfg.run, &mut inputs)?;
    let hash = config_hash(cfg, &inputs.bytes)?;
    let done = pending(&hash)?;
    let envelope = json!({
        "schema_version": SCHEMA_VERSION,
        "command": name,
        "config": cfg,
        "config_hash": hash,
        "status": done.status,
        "result": done.result,
    });
    let mut artifacts = Vec::new();
    let mut put = |file: String, bytes: &[u8]| -> CliResult<()> {
        write_atomic(&out.join(&file), bytes)?;
        artifacts.push(file);
        Ok(())
    };
    put(format!("{name}.json"), canonical_json(&envelope)?.as_bytes())?;
    put(format!("{name}.md"), done.report.render().as_bytes())?;
    for (file, bytes) in done.extra {
        put(file, &bytes)?;
    }
    Ok(RunSummary { schema_version: SCHEMA_VERSION, command: name, status: done.status, exit_code: done.status.exit_code(), config_hash: hash, artifacts })
}

type Pending<'a> = Box<dyn FnOnce(&str) -> CliResult<Done> + 'a>;

/// Loads every input of `cmd` and returns the computation, which takes the
/// config hash for the report header.
fn prepare<'a>(cmd: &'a Command, inputs: &mut Inputs) -> CliResult<Pending<'a>> {
    Ok(match cmd {
        Command::SpaceBuild(a) => {
            let f: RecipeFile = inputs.load(&a.recipe)?;
            Box::new(move |h| space_build(&f, a.points, h))
        }
        Command::CoverStats(a) => {
            let f: CoverFile = inputs.load(&a.cover)?;
            Box::new(move |h| cover_stats_cmd(&f, a.bins, h))
        }
        Command::CoverMerge(a) => {
            let f: MergeFile = inputs.load(&a.input)?;
            Box::new(move |h| merge_cmd(&f, h))
        }
        Command::CoverTelescope(a) => Box::new(move |h| telescope_cmd(a, h)),
        Command::SublinearProfile(a) => {
            let f: RelationFile = inputs.load(&a.input)?;
            Box::new(move |h| profile_cmd(&f, h))
        }
        Command::SublinearDiverge(a) => {
            let f: SetsFile = inputs.load(&a.input)?;
            Box::new(move |h| diverge_cmd(&f, a, h))
        }
        Command::SublinearPhi(a) => {
            let f: SetsFile = inputs.load(&a.input)?;
            Box::new(move |h| phi_cmd(&f, a.c, h))
        }
        Command::NerveProject(a) => {
            let f: CoverFile = inputs.load(&a.cover)?;
            Box::new(move |h| project_cmd(&f, h))
        }
        Command::NervePush(a) => {
            let f: CoverFile = inputs.load(&a.cover)?;
            Box::new(move |h| push_cmd(&f, a, h))
        }
        Command::CertifyBrick(a) => {
            let f: RecipeFile = inputs.load(&a.recipe)?;
            Box::new(move |h| brick_cmd(&f, a.r0, h))
        }
        Command::CertifySearch(a) => {
            let f: RecipeFile = inputs.load(&a.recipe)?;
            Box::new(move |h| search_cmd(&f, a, h))
        }
        Command::CertifyVerify(a) => {
            let cert: ANCertificate = inputs.load(&a.cert)?;
            Box::new(move |h| verify_cmd(&cert, h))
        }
        Command::CertifyProduct(a) => {
            let cert: ANCertificate = inputs.load(&a.cert)?;
            Box::new(move |h| product_cmd(&cert, a.radius, h))
        }
        Command::CertifyParabolic(a) => Box::new(move |h| parabolic_cmd(a, h)),
        Command::ConeSeq(a) => Box::new(move |h| seq_cmd(a, h)),
        Command::ConeGap(a) => Box::new(move |h| gap_cmd(a, h)),
        Command::ConeXi(a) => Box::new(move |h| xi_cmd(a, h)),
    })
}

fn done(status: Status, result: Value, report: Report) -> CliResult<Done> {
    Ok(Done { status, result, report, extra: vec![] })
}

fn norm_histogram(w: &MetricWindow, bins: usize) -> Vec<(f64, usize)> {
    let width = (w.radius() / bins as f64).max(1e-9);
    let mut h: Vec<(f64, usize)> = (0..bins).map(|k| (k as f64 * width, 0)).collect();
    for &n in w.norms() {
        h[((n / width) as usize).min(bins - 1)].1 += 1;
    }
    h
}

fn space_build(f: &RecipeFile, points: bool, hash: &str) -> CliResult<Done> {
    let w = MetricWindow::build(&f.recipe).map_err(|e| CliError::from(e).at("/recipe"))?;
    let bad = w.check_triangle(400, 20_000, 0);
    let hist = norm_histogram(&w, 16);
    let mut result = json!({
        "points": w.len(),
        "radius": w.radius(),
        "basepoint": w.label(w.basepoint()),
        "triangle_ok": bad.is_none(),
        "triangle_violation": bad.map(|(x, y, z)| [w.label(x), w.label(y), w.label(z)]),
        "norm_histogram": hist,
    });
    if points {
        let listing: BTreeMap<&str, f64> = (0..w.len()).map(|i| (w.label(i), w.norm(i))).collect();
        result["norms"] = json!(listing);
    }
    let mut rep = Report::new("space build", hash);
    rep.section("window").facts(&[
        ("points", w.len().to_string()),
        ("radius", num(w.radius())),
        ("basepoint", w.label(w.basepoint()).to_string()),
        ("triangle inequality", yes(bad.is_none())),
    ]);
    rep.section("norms").svg(svg_plot("points per annulus", "norm", "points", &[Series::new("count", hist.iter().map(|&(r, c)| (r, c as f64)).collect())]));
    done(Status::from_check(bad.is_none()), result, rep)
}

fn cover_stats_cmd(f: &CoverFile, bins: usize, hash: &str) -> CliResult<Done> {
    let w = window(&f.window)?;
    let c = cover(&w, &f.members, "/members")?;
    let s = cover_stats(&c, &w, bins);
    let mut rep = Report::new("cover stats", hash);
    rep.section("cover").facts(&[
        ("members", s.members.to_string()),
        ("mesh", num(s.mesh)),
        ("multiplicity", s.multiplicity.to_string()),
        ("Lebesgue number", num(s.lebesgue)),
    ]);
    rep.section("Lebesgue profile").svg(svg_plot("min Lebesgue value per annulus", "norm", "L", &[Series::new("L", s.profile.clone())]));
    done(Status::Ok, json!(s), rep)
}

fn merge_cmd(f: &MergeFile, hash: &str) -> CliResult<Done> {
    let w = window(&f.window)?;
    let u = cover(&w, &f.fine, "/fine")?;
    let v = cover(&w, &f.coarse, "/coarse")?;
    let k = ids(&w, &f.key, "/key")?;
    let m = star_merge(&w, &u, &v, &k).map_err(|e| CliError::from(e).at("/fine"))?;
    let stats = cover_stats(&m.merged, &w, 16);
    let result = json!({
        "merged": m.merged.to_labels(&w),
        "origin": m.origin,
        "choice": m.choice,
        "checks": m.checks,
        "stats": stats,
    });
    let mut rep = Report::new("star merge", hash);
    rep.section("merged cover").facts(&[
        ("fine members", u.len().to_string()),
        ("coarse members", v.len().to_string()),
        ("merged members", m.merged.len().to_string()),
        ("mesh", num(stats.mesh)),
        ("multiplicity", stats.multiplicity.to_string()),
    ]);
    let c = &m.checks;
    rep.section("checks").facts(&[
        ("covers", yes(c.covers)),
        ("multiplicity", yes(c.multiplicity)),
        ("refines coarse", yes(c.refines_coarse)),
        ("fine refines merged", yes(c.fine_refines)),
        ("inside key kept", yes(c.inside_key_kept)),
        ("off key survive", yes(c.off_key_survive)),
    ]);
    done(Status::from_check(m.checks.all()), result, rep)
}

fn telescope_cmd(a: &TelescopeArgs, hash: &str) -> CliResult<Done> {
    let w = MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: 1, generators: None }, radius: a.radius })?;
    let t = stop_index(a.c, a.d, a.r0, w.rim(a.margin));
    let ladder = scale_ladder(a.c, a.d, a.r0, t).iter().map(|&r| line_interval_cover(&w, r, a.c)).collect::<crate::Result<Vec<_>>>()?;
    let target = half_line_cover(&w, a.overlap)?;
    let res = telescope(&w, &target, &ladder, a.c, a.d, a.r0, a.margin)?;
    let result = json!({
        "params": res.params,
        "stage_stats": res.stage_stats,
        "grouped": res.grouped.to_labels(&w),
        "grouped_target": res.grouped_target,
        "slope_bound": res.slope_bound,
        "annulus": res.annulus,
        "guaranteed_up_to": res.guaranteed_up_to,
        "measured_slope": res.measured_slope,
        "worst": res.worst,
        "partial": res.partial,
        "checks": res.checks,
    });
    let mut rep = Report::new("telescope", hash);
    rep.section("ladder").table(
        &["stage", "r", "members", "mesh", "multiplicity"],
        &res.stage_stats.iter().map(|s| vec![s.index.to_string(), num(s.r), s.members.to_string(), num(s.mesh), s.multiplicity.to_string()]).collect::<Vec<_>>(),
    );
    let ch = &res.checks;
    rep.section("result").facts(&[
        ("slope bound", num(res.slope_bound)),
        ("measured slope", num(res.measured_slope)),
        ("annulus", format!("[{}, {}]", num(res.annulus.0), num(res.annulus.1))),
        ("grouped refines target", yes(ch.grouped_refines_target)),
        ("grouped multiplicity", yes(ch.grouped_multiplicity)),
        ("Lebesgue slope", yes(ch.lebesgue_slope)),
        ("membership persistence", yes(ch.membership_persistence)),
        ("backward propagation", yes(ch.backward_propagation)),
        ("stages refine limit", yes(ch.stages_refine_limit)),
        ("limit multiplicity", yes(ch.limit_multiplicity)),
    ]);
    rep.svg(svg_plot("stage mesh", "r", "mesh", &[Series::new("mesh", res.stage_stats.iter().map(|s| (s.r, s.mesh)).collect()), Series::new("C r", res.stage_stats.iter().map(|s| (s.r, a.c * s.r)).collect())]));
    done(Status::from_check(res.checks.all()), result, rep)
}

fn profile_cmd(f: &RelationFile, hash: &str) -> CliResult<Done> {
    let w = window(&f.window)?;
    let mut pairs = Vec::with_capacity(f.pairs.len());
    for (i, (y, x)) in f.pairs.iter().enumerate() {
        pairs.push((w.id(y).map_err(|e| CliError::from(e).at(&format!("/pairs/{i}/0")))?, w.id(x).map_err(|e| CliError::from(e).at(&format!("/pairs/{i}/1")))?));
    }
    let rel = Relation { pairs };
    let prof = control_profile(&rel, &w, &default_r_grid(&w));
    let tail = prof.max_at_or_above(w.radius() / 2.0);
    let result = json!({ "samples": prof.samples, "max_beyond_half_radius": tail });
    let mut rep = Report::new("control profile", hash);
    rep.section("relation").facts(&[("pairs", rel.pairs.len().to_string()), ("max beyond half the radius", num(tail))]);
    rep.svg(svg_plot(
        "control profile",
        "r",
        "sup d(y,x)/norm",
        &[Series::new("forward", prof.samples.iter().map(|s| (s.r, s.forward)).collect()), Series::new("backward", prof.samples.iter().map(|s| (s.r, s.backward)).collect())],
    ));
    done(Status::Ok, json!(result), rep)
}

fn sets(w: &MetricWindow, f: &SetsFile) -> CliResult<Vec<Vec<usize>>> {
    f.sets.iter().enumerate().map(|(i, s)| ids(w, s, &format!("/sets/{i}"))).collect()
}

fn diverge_cmd(f: &SetsFile, a: &DivergeArgs, hash: &str) -> CliResult<Done> {
    let w = window(&f.window)?;
    let s = sets(&w, f)?;
    let cfg = WitnessConfig { threshold: a.threshold, margin: a.margin, steps: a.steps };
    let wit = divergence_witness(&s, &w, &cfg).map_err(|e| CliError::from(e).at("/sets"))?;
    let mut rep = Report::new("divergence witness", hash);
    rep.section("witness").facts(&[("valid", yes(wit.valid)), ("c", num(wit.c)), ("r0", num(wit.r0)), ("rim", num(wit.rim))]);
    rep.svg(svg_plot("slope by starting radius", "r0", "c(r0)", &[Series::new("c", wit.margin_profile.clone())]));
    done(Status::from_check(wit.valid), json!(wit), rep)
}

fn phi_cmd(f: &SetsFile, c: Option<f64>, hash: &str) -> CliResult<Done> {
    let w = window(&f.window)?;
    if f.sets.len() != 2 {
        return Err(CliError::input("invalid", format!("expected two sets, got {}", f.sets.len()), Some("/sets".into())));
    }
    let s = sets(&w, f)?;
    let u = urysohn_phi(&s[0], &s[1], &w, c)?;
    let phi: BTreeMap<&str, f64> = (0..w.len()).map(|i| (w.label(i), u.phi[i])).collect();
    let argmax = u.seminorm.argmax.map(|(x, y)| [w.label(x), w.label(y)]);
    let result = json!({ "phi": phi, "seminorm": u.seminorm.value, "argmax": argmax, "c_used": u.c_used, "bound": u.bound, "within": u.within });
    let mut rep = Report::new("Urysohn function", hash);
    rep.section("seminorm").facts(&[
        ("seminorm", num(u.seminorm.value)),
        ("bound", u.bound.map_or("none".into(), num)),
        ("within", u.within.map_or("not checked".into(), yes)),
    ]);
    let mut by_norm: Vec<(f64, f64)> = (0..w.len()).map(|i| (w.norm(i), u.phi[i])).collect();
    by_norm.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    rep.svg(svg_plot("phi by norm", "norm", "phi", &[Series::new("phi", by_norm)]));
    done(Status::from_check(u.within != Some(false)), result, rep)
}

fn labeled_coords(w: &MetricWindow, coords: &[Coords]) -> BTreeMap<String, Vec<(u32, f64)>> {
    (0..w.len()).map(|i| (w.label(i).to_string(), coords[i].clone())).collect()
}

fn project_cmd(f: &CoverFile, hash: &str) -> CliResult<Done> {
    let w = window(&f.window)?;
    let c = cover(&w, &f.members, "/members")?;
    let p = projection(&c, &w)?;
    let result = json!({
        "vertices": p.nerve.vertices,
        "dimension": p.nerve.dimension,
        "simplices": p.nerve.simplices.len(),
        "maximal": p.nerve.maximal,
        "lipschitz": p.lipschitz,
        "lipschitz_pair": p.lipschitz_pair.map(|(x, y)| [w.label(x), w.label(y)]),
        "cobounded": p.cobounded,
        "coords": labeled_coords(&w, &p.coords),
    });
    let mut rep = Report::new("nerve projection", hash);
    rep.section("nerve").facts(&[
        ("vertices", p.nerve.vertices.to_string()),
        ("dimension", p.nerve.dimension.to_string()),
        ("simplices", p.nerve.simplices.len().to_string()),
        ("maximal simplices", p.nerve.maximal.len().to_string()),
        ("Lipschitz constant", num(p.lipschitz)),
        ("cobounded diameter", num(p.cobounded)),
    ]);
    done(Status::Ok, result, rep)
}

fn push_cmd(f: &CoverFile, a: &PushArgs, hash: &str) -> CliResult<Done> {
    let w = window(&f.window)?;
    let c = cover(&w, &f.members, "/members")?;
    let p = projection(&c, &w)?;
    let s = skeleton_push(&p, &w, a.candidate.into(), a.n)?;
    let result = json!({
        "n": s.n,
        "choices": s.choices,
        "cover": s.cover.to_labels(&w),
        "cover_vertex": s.cover_vertex,
        "lambda": s.lambda,
        "m": s.m,
        "b": s.b,
        "q_lipschitz": s.q_lipschitz,
        "lebesgue": s.lebesgue,
        "lebesgue_bound": s.lebesgue_bound,
        "multiplicity": s.multiplicity,
        "checks": s.checks,
        "q": labeled_coords(&w, &s.q),
    });
    let mut rep = Report::new("skeleton push", hash);
    rep.section("push").facts(&[
        ("pushed dimension", s.n.to_string()),
        ("Lipschitz constant of p", num(s.lambda)),
        ("Lipschitz constant of q", num(s.q_lipschitz)),
        ("Lebesgue number", num(s.lebesgue)),
        ("Lebesgue bound", num(s.lebesgue_bound)),
        ("multiplicity", s.multiplicity.to_string()),
        ("stars shrink", yes(s.checks.stars_shrink)),
        ("multiplicity check", yes(s.checks.multiplicity)),
        ("Lebesgue check", yes(s.checks.lebesgue)),
    ]);
    done(Status::from_check(s.checks.all()), result, rep)
}

fn verify_section(rep: &mut Report, v: &VerifyReport) {
    rep.section("entries").table(
        &["r", "members", "mesh", "multiplicity", "Lebesgue", "mesh ok", "mult ok", "Lebesgue ok"],
        &v.entries
            .iter()
            .map(|e| vec![num(e.r), e.members.to_string(), num(e.mesh), e.multiplicity.to_string(), num(e.lebesgue), yes(e.mesh_ok), yes(e.multiplicity_ok), yes(e.lebesgue_ok)])
            .collect::<Vec<_>>(),
    );
    rep.svg(svg_plot(
        "scale-free constants",
        "r",
        "ratio",
        &[
            Series::new("mesh / r", v.entries.iter().map(|e| (e.r, e.mesh / e.r)).collect()),
            Series::new("Lebesgue / r", v.entries.iter().map(|e| (e.r, e.lebesgue / e.r)).collect()),
            Series::new("C", v.entries.iter().map(|e| (e.r, v.c)).collect()),
        ],
    ));
}

fn cert_artifact(file: &str, cert: &ANCertificate) -> CliResult<(String, Vec<u8>)> {
    Ok((file.to_string(), canonical_json(cert)?.into_bytes()))
}

fn cert_done(title: &str, file: &str, cert: &ANCertificate, hash: &str) -> CliResult<Done> {
    let v = verify_cert(cert)?;
    let mut rep = Report::new(title, hash);
    rep.section("certificate").facts(&[
        ("construction", cert.construction.clone()),
        ("n", cert.n.to_string()),
        ("C", num(cert.c)),
        ("r0", num(cert.r0)),
        ("scales", cert.entries.len().to_string()),
        ("verified", yes(v.pass)),
    ]);
    verify_section(&mut rep, &v);
    Ok(Done { status: Status::from_check(v.pass), result: json!({ "certificate": file, "verify": v }), report: rep, extra: vec![cert_artifact(file, cert)?] })
}

fn brick_cmd(f: &RecipeFile, r0: f64, hash: &str) -> CliResult<Done> {
    let w = MetricWindow::build(&f.recipe).map_err(|e| CliError::from(e).at("/recipe"))?;
    let cert = brick_certificate(&w, r0).map_err(|e| CliError::from(e).at("/recipe"))?;
    cert_done("brick certificate", "cert.json", &cert, hash)
}

fn search_cmd(f: &RecipeFile, a: &SearchArgs, hash: &str) -> CliResult<Done> {
    let w = MetricWindow::build(&f.recipe).map_err(|e| CliError::from(e).at("/recipe"))?;
    if a.seeds.is_empty() {
        return Err(CliError::input("invalid", "at least one seed is needed", None));
    }
    match search_certificate(&w, a.n, a.c, a.r0, &a.seeds) {
        Ok(cert) => cert_done("certificate search", "cert.json", &cert, hash),
        Err((r, failures)) => {
            let mut rep = Report::new("certificate search", hash);
            rep.section("exhausted").para(&format!("No seed produced a cover at r = {} with n = {} and C = {}.", num(r), a.n, num(a.c)));
            rep.table(
                &["seed", "restarts", "iterations", "best multiplicity"],
                &failures.iter().map(|f| vec![f.seed.to_string(), f.restarts.to_string(), f.iterations.to_string(), f.best_multiplicity.to_string()]).collect::<Vec<_>>(),
            );
            done(Status::Exhausted, json!({ "failed_at_r": r, "failures": failures }), rep)
        }
    }
}

fn verify_cmd(cert: &ANCertificate, hash: &str) -> CliResult<Done> {
    let v = verify_cert(cert)?;
    let mut rep = Report::new("certificate verification", hash);
    rep.section("certificate").facts(&[
        ("construction", cert.construction.clone()),
        ("n", cert.n.to_string()),
        ("C", num(cert.c)),
        ("verified", yes(v.pass)),
        ("first failure", v.first_failure().map_or("none".into(), |e| format!("r = {}", num(e.r)))),
    ]);
    verify_section(&mut rep, &v);
    done(Status::from_check(v.pass), json!(v), rep)
}

fn product_cmd(cert: &ANCertificate, radius: f64, hash: &str) -> CliResult<Done> {
    let w = MetricWindow::build(&SpaceRecipe::ProductWithLine { base: Box::new(cert.window.clone()), radius })?;
    let prod = product_certificate(cert, &w)?;
    cert_done("product certificate", "product-cert.json", &prod, hash)
}

fn parabolic_cmd(a: &ParabolicArgs, hash: &str) -> CliResult<Done> {
    let cfg = ParabolicConfig { r: a.r, c: a.c, seeds: a.seeds };
    let p = crate::certify::parabolic_demo(a.radius, &cfg)?;
    let mut rep = Report::new("parabolic region", hash);
    rep.section("rungs").table(
        &["radius", "points", "profile / (2/sqrt r)", "nonincreasing", "n = 1 fails", "n = 2 succeeds"],
        &p.rungs.iter().map(|r| vec![num(r.radius), r.points.to_string(), num(r.bound_ratio), yes(r.nonincreasing), yes(r.n1_fails), yes(r.n2_succeeds)]).collect::<Vec<_>>(),
    );
    let mut series: Vec<Series> = p.rungs.iter().map(|r| Series::new(&format!("radius {}", num(r.radius)), r.projection.samples.iter().filter(|s| s.r >= 16.0).map(|s| (s.r, s.forward.max(s.backward))).collect())).collect();
    if let Some(last) = p.rungs.last() {
        series.truncate(3);
        series.push(Series::new("2/sqrt r", last.projection.samples.iter().filter(|s| s.r >= 16.0).map(|s| (s.r, 2.0 / s.r.sqrt())).collect()));
    }
    rep.svg(svg_plot("projection control", "r", "profile", &series));
    done(Status::from_check(p.stable), json!(p), rep)
}

fn seq_cmd(a: &SeqArgs, hash: &str) -> CliResult<Done> {
    let s = exp_sequence(a.a, a.start, a.len)?;
    let bad = s.growth_violation();
    let rows: Vec<Vec<String>> = s.values.iter().enumerate().map(|(k, v)| vec![(k + 1).to_string(), v.to_string()]).collect();
    let mut rep = Report::new("exponential sequence", hash);
    rep.section("sequence").facts(&[("a", num(s.a)), ("length", s.values.len().to_string()), ("growth holds", yes(bad.is_none()))]);
    rep.svg(svg_plot("log f(k)", "k", "ln f(k)", &[Series::new("ln f", s.values.iter().enumerate().map(|(k, &v)| ((k + 1) as f64, (v as f64).ln())).collect())]));
    let extra = vec![("sequence.csv".to_string(), csv_string(&["k", "n"], &rows)?.into_bytes())];
    Ok(Done { status: Status::from_check(bad.is_none()), result: json!({ "sequence": s, "growth_violation": bad }), report: rep, extra })
}

fn ray_instance(a: &RayArgs) -> CliResult<(RayPair, crate::cone::ExponentialSequence)> {
    let growth = a.a.unwrap_or_else(|| required_growth(a.d1, a.d2, a.delta));
    let seq = exp_sequence(growth, a.start, a.len)?;
    Ok((ray_pair(&seq, a.u, a.d1, a.v, a.d2, a.delta, a.jitter, a.seed)?, seq))
}

fn sequence_csv(p: &RayPair, which: &crate::cone::ScaledSequence) -> CliResult<Vec<u8>> {
    let rows: Vec<Vec<String>> = which.indices.iter().zip(&which.points).map(|(n, &q)| vec![n.to_string(), p.window.label(q).to_string(), num(p.window.norm(q))]).collect();
    Ok(csv_string(&["n", "point", "norm"], &rows)?.into_bytes())
}

fn gap_cmd(a: &RayArgs, hash: &str) -> CliResult<Done> {
    let (p, seq) = ray_instance(a)?;
    let g = gap_claim_check(&p.x, &p.y, &p.window, &seq, a.d1, a.d2, a.delta)?;
    let cd = cone_distance(&p.x, &p.y, &p.window, a.tail.min(p.x.len()))?;
    let mut rep = Report::new("gap inequalities", hash);
    rep.section("growth").facts(&[
        ("a", num(g.a)),
        ("required a", num(g.a_required)),
        ("a bound", yes(g.a_bound_ok)),
        ("cone distance estimate", num(cd.estimate)),
        ("tail spread", num(cd.spread)),
        ("all inequalities", yes(g.pass)),
    ]);
    if !g.broken.is_empty() {
        rep.section("broken").para(&g.broken.join("\n\n"));
    }
    rep.svg(svg_plot("d(x_n, y_n) / n", "n", "ratio", &[Series::new("ratio", g.margins.iter().map(|m| (m.n as f64, m.pair_distance / m.n as f64)).collect())]));
    let extra = vec![("x.csv".to_string(), sequence_csv(&p, &p.x)?), ("y.csv".to_string(), sequence_csv(&p, &p.y)?)];
    Ok(Done { status: Status::from_check(g.pass), result: json!({ "gap": g, "cone_distance": cd }), report: rep, extra })
}

fn xi_cmd(a: &RayArgs, hash: &str) -> CliResult<Done> {
    let (p, _) = ray_instance(a)?;
    let wit = xi_separation(&p.x, &p.y, &p.window, a.eps, &WitnessConfig::default())?;
    let mut rep = Report::new("trace divergence", hash);
    rep.section("witness").facts(&[("valid", yes(wit.valid)), ("c", num(wit.c)), ("r0", num(wit.r0)), ("rim", num(wit.rim))]);
    rep.svg(svg_plot("slope by starting radius", "r0", "c(r0)", &[Series::new("c", wit.margin_profile.clone())]));
    let extra = vec![("x.csv".to_string(), sequence_csv(&p, &p.x)?), ("y.csv".to_string(), sequence_csv(&p, &p.y)?)];
    Ok(Done { status: Status::from_check(wit.valid), result: json!(wit), report: rep, extra })
}

// ==== entry point ====

fn envelope(e: &CliError) -> Value {
    json!({ "schema_version": SCHEMA_VERSION, "error": e })
}

/// Reports `e` on stderr and, when an output directory is known, as error.json.
fn fail(e: CliError, out: Option<&Path>) -> i32 {
    let env = envelope(&e);
    eprintln!("{}", serde_json::to_string(&env).unwrap_or_default());
    if let Some(out) = out {
        if let Ok(s) = canonical_json(&env) {
            let _ = write_atomic(&out.join("error.json"), s.as_bytes());
        }
    }
    e.exit_code
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return EXIT_OK;
            }
            return fail(CliError::input("usage", e.to_string().trim_end(), None), None);
        }
    };
    let out = cli.out.clone();
    let cfg = match cli.top {
        Top::Run { config } => match fs::read(&config) {
            Ok(bytes) => match parse_json::<RunConfig>(&bytes, &config.display().to_string()) {
                Ok(c) => c,
                Err(e) => return fail(e, Some(&out)),
            },
            Err(e) => return fail(CliError::input("io", format!("{}: {e}", config.display()), None), Some(&out)),
        },
        top => match top.into_command() {
            Some(cmd) => RunConfig { schema_version: SCHEMA_VERSION, run: cmd },
            None => unreachable!("run is handled above"),
        },
    };
    match execute(&cfg, &out) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).unwrap_or_default());
            summary.exit_code
        }
        Err(e) => fail(e, Some(&out)),
    }
}
