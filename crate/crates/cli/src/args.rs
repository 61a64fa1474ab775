use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "treeseg",
    about = "Tree crown segmentation from airborne LiDAR"
)]
pub struct Cli {
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a void-filled ground raster (ESRI ASCII grid) from class-2 points.
    Dem(DemArgs),
    /// Segment crowns; writes <prefix>trees.csv and <prefix>points.csv.
    Segment(SegmentArgs),
    /// Match detections to a stem map and report accuracy.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene with known crowns.
    Synth(SynthArgs),
    /// Draw segmentation results as an SVG map.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct DemArgs {
    /// Point file: `x y z [class]` per line.
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub cell_size: f64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Point file: `x y z [class]` per line.
    pub input: PathBuf,
    /// Ground raster; built from the cloud's class-2 points when omitted.
    #[arg(long)]
    pub dem: Option<PathBuf>,
    /// Cell size of the raster built when `--dem` is omitted.
    #[arg(long, default_value_t = 1.0)]
    pub cell_size: f64,
    /// Surface grid spacing; estimated from the cloud when omitted.
    #[arg(long)]
    pub nps: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub min_height: f64,
    /// Gaussian sigma [default: nps].
    #[arg(long)]
    pub smooth_sigma: Option<f64>,
    /// Gaussian support radius [default: 3 nps].
    #[arg(long)]
    pub smooth_radius: Option<f64>,
    /// Minimum detectable crown width, meters.
    #[arg(long, default_value_t = 1.5)]
    pub mdcw: f64,
    #[arg(long, default_value_t = 15.24)]
    pub max_profile_dist: f64,
    /// Profile band width [default: 2 nps].
    #[arg(long)]
    pub profile_width: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub epsilon_deg: f64,
    /// Crown length ratio for cone-like profiles.
    #[arg(long, default_value_t = 0.8)]
    pub clc: f64,
    /// Crown length ratio for sphere-like profiles.
    #[arg(long, default_value_t = 0.7)]
    pub cls: f64,
    /// Overlap ratio for cone-like profiles.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub oc: f64,
    /// Overlap ratio for sphere-like profiles.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub os: f64,
    /// Tukey fence multiplier on the spacing IQR.
    #[arg(long, default_value_t = 6.0)]
    pub gap_k: f64,
    #[arg(long, default_value_t = 8)]
    pub min_gap_points: usize,
    /// Profile spacing that always counts as a gap, meters.
    #[arg(long, default_value_t = 1.5)]
    pub void_width: f64,
    #[arg(long, default_value_t = 8)]
    pub initial_profiles: usize,
    #[arg(long, default_value_t = 512)]
    pub max_profiles: usize,
    /// Outward hull push on gap and profile-end boundaries [default: 5 nps].
    #[arg(long)]
    pub edge_margin: Option<f64>,
    /// Judge a local minimum on whatever slope samples lie past it.
    #[arg(long)]
    pub partial_window: bool,
    /// Output path prefix.
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// trees.csv from `segment`.
    pub trees: PathBuf,
    /// stems.csv: stem_id,x,y,ground_z,height,crown_class.
    pub stems: PathBuf,
    /// Match tier `LEAN_DEG,HEIGHT_FRAC,SCORE`, strictest first; repeat for
    /// each tier [default: 5,0.1,100 10,0.2,70 15,0.3,40].
    #[arg(long = "tier", value_parser = parse_tier)]
    pub tiers: Vec<(f64, f64, u32)>,
    /// Writes <prefix>pairs.csv and <prefix>summary.txt.
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

fn parse_tier(s: &str) -> Result<(f64, f64, u32), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lean, frac, score] = parts[..] else {
        return Err("expected LEAN_DEG,HEIGHT_FRAC,SCORE".into());
    };
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((
        num(lean)?,
        num(frac)?,
        score
            .parse::<u32>()
            .map_err(|e| format!("{score:?}: {e}"))?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Cone,
    Sphere,
    Ellipsoid,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (JSON); flags below are ignored when given.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Random stand size.
    #[arg(long, default_value_t = 50)]
    pub trees: usize,
    #[arg(long, num_args = 2, value_names = ["W", "H"], default_values_t = [100.0, 100.0])]
    pub extent: Vec<f64>,
    /// Planar terrain grade, percent along +x.
    #[arg(long, default_value_t = 0.0)]
    pub slope: f64,
    /// Returns per square meter on crowns.
    #[arg(long, default_value_t = treeseg_core::synth::DEFAULT_POINT_DENSITY)]
    pub density: f64,
    /// Restrict the stand to these crown shapes.
    #[arg(long, value_delimiter = ',')]
    pub shapes: Vec<Shape>,
    /// Overrides the seed in `--spec`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Writes <prefix>points.txt, <prefix>stems.csv and <prefix>labels.csv.
    #[arg(long, default_value = "")]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub trees: PathBuf,
    pub points: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}
