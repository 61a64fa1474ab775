use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use treeseg_core::evaluate::{MatchThresholds, MatchTier};
use treeseg_core::io;
use treeseg_core::preprocess::estimate_nps;
use treeseg_core::synth::{self, CrownShape, SceneSpec, StandParams, Terrain};
use treeseg_core::terrain::{build_dem, read_ascii_grid, write_ascii_grid};
use treeseg_core::{
    evaluate, preprocess, segment_all, Detection, Error, Point3, PointClass, PreprocessConfig,
    SegmenterConfig,
};

use crate::args::{Cli, Command, DemArgs, EvaluateArgs, RenderArgs, SegmentArgs, Shape, SynthArgs};
use crate::render::render_svg;

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

/// A failed command: process exit code plus message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const IO: u8 = 2;
    pub const DEGENERATE: u8 = 3;
    pub const EXTENT: u8 = 4;

    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::new(Self::IO, format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Domain(_) => Self::USAGE,
            Error::Io(_) | Error::Csv(_) | Error::Parse { .. } => Self::IO,
            Error::EmptyInput(_) | Error::Degenerate(_) => Self::DEGENERATE,
            Error::OutOfExtent { .. } => Self::EXTENT,
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

pub fn run(cli: Cli) -> Outcome {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::new(Failure::USAGE, e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Dem(a) => cmd_dem(&a),
        Command::Segment(a) => cmd_segment(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Render(a) => cmd_render(&a),
    })
}

/// `prefix` + `name`, with a `.` between unless the prefix is empty or
/// names a directory.
fn output_path(prefix: &str, name: &str) -> PathBuf {
    if prefix.is_empty()
        || prefix.ends_with('/')
        || prefix.ends_with(std::path::MAIN_SEPARATOR)
        || Path::new(prefix).is_dir()
    {
        Path::new(prefix).join(name)
    } else {
        PathBuf::from(format!("{prefix}.{name}"))
    }
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::io(path, e))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(path, e))
}

/// Read errors are reported against the file they came from.
fn in_file<T>(path: &Path, r: treeseg_core::Result<T>) -> Outcome<T> {
    r.map_err(|e| match e {
        Error::Io(_) | Error::Csv(_) | Error::Parse { .. } => Failure::io(path, e),
        other => other.into(),
    })
}

fn read_cloud(path: &Path) -> Outcome<Vec<Point3>> {
    let points = in_file(path, io::read_points(open(path)?))?;
    if points.is_empty() {
        return Err(Failure::io(path, "no points"));
    }
    Ok(points)
}

fn positive(name: &str, v: f64) -> Outcome {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::new(
            Failure::USAGE,
            format!("--{name} must be positive, got {v}"),
        ))
    }
}

fn cmd_dem(a: &DemArgs) -> Outcome {
    positive("cell-size", a.cell_size)?;
    let points = read_cloud(&a.input)?;
    let (dem, passes) = build_dem(&points, a.cell_size)?;
    let mut out = create(&a.out)?;
    in_file(&a.out, write_ascii_grid(&dem, &mut out))?;
    out.flush().map_err(|e| Failure::io(&a.out, e))?;
    say!("cells={} fill_passes={}", dem.cell_count(), passes);
    Ok(())
}

fn configs(a: &SegmentArgs, nps: f64) -> Outcome<(PreprocessConfig, SegmenterConfig)> {
    let mut pre = PreprocessConfig::new(nps);
    pre.min_height = a.min_height;
    pre.smooth_sigma = a.smooth_sigma.unwrap_or(pre.smooth_sigma);
    pre.smooth_radius = a.smooth_radius.unwrap_or(pre.smooth_radius);
    pre.validate()?;

    let mut seg = SegmenterConfig::new(nps);
    seg.mdcw = a.mdcw;
    seg.max_profile_dist = a.max_profile_dist;
    seg.profile_width = a.profile_width.unwrap_or(seg.profile_width);
    seg.epsilon_deg = a.epsilon_deg;
    seg.cl_cone = a.clc;
    seg.cl_sphere = a.cls;
    seg.overlap_cone = a.oc;
    seg.overlap_sphere = a.os;
    seg.gap_fence_k = a.gap_k;
    seg.min_gap_points = a.min_gap_points;
    seg.void_width = a.void_width;
    seg.initial_profiles = a.initial_profiles;
    seg.max_profiles = a.max_profiles;
    seg.edge_margin = a.edge_margin.unwrap_or(seg.edge_margin);
    seg.full_right_window = !a.partial_window;
    seg.validate()?;
    Ok((pre, seg))
}

fn cmd_segment(a: &SegmentArgs) -> Outcome {
    // flag check before any file is touched; nps-derived defaults are redone below
    if let Some(nps) = a.nps {
        positive("nps", nps)?;
    }
    positive("cell-size", a.cell_size)?;
    configs(a, a.nps.unwrap_or(1.0))?;

    let start = Instant::now();
    let points = read_cloud(&a.input)?;
    let nps = match a.nps {
        Some(v) => {
            say!("nps={v}");
            v
        }
        None => {
            let surface: Vec<Point3> = points
                .iter()
                .copied()
                .filter(|p| p.class != PointClass::Ground)
                .collect();
            let v = estimate_nps(if surface.is_empty() {
                &points
            } else {
                &surface
            })?;
            say!("nps={v:.4} (estimated)");
            v
        }
    };
    let (pre, seg) = configs(a, nps)?;

    let dem = match &a.dem {
        Some(path) => in_file(path, read_ascii_grid(open(path)?))?,
        None => build_dem(&points, a.cell_size)?.0,
    };
    let lsps = preprocess(&points, &dem, &pre)?;
    let crowns = segment_all(&lsps, &seg)?;

    let trees_path = output_path(&a.out_prefix, "trees.csv");
    let mut out = create(&trees_path)?;
    in_file(&trees_path, io::write_trees_csv(&mut out, &crowns))?;
    let points_path = output_path(&a.out_prefix, "points.csv");
    let mut out = create(&points_path)?;
    let labels = io::labels_from_crowns(lsps.len(), &crowns);
    in_file(&points_path, io::write_points_csv(&mut out, &lsps, &labels))?;

    let noise = crowns.iter().filter(|c| c.is_noise).count();
    say!("surface_points={}", lsps.len());
    say!("trees={}", crowns.len() - noise);
    say!("noise={noise}");
    say!("runtime_s={:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn thresholds(tiers: &[(f64, f64, u32)]) -> Outcome<MatchThresholds> {
    let t = if tiers.is_empty() {
        MatchThresholds::default()
    } else {
        MatchThresholds {
            tiers: tiers
                .iter()
                .map(|&(lean_deg, height_frac, score)| MatchTier {
                    lean_deg,
                    height_frac,
                    score,
                })
                .collect(),
        }
    };
    t.validate()?;
    Ok(t)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Outcome {
    let thresholds = thresholds(&a.tiers)?;
    let trees = in_file(&a.trees, io::read_trees_csv(open(&a.trees)?))?;
    let stems = in_file(&a.stems, io::read_stems_csv(open(&a.stems)?))?;
    let detections: Vec<Detection> = trees
        .iter()
        .map(|t| Detection {
            tree_id: t.tree_id,
            x: t.apex_x,
            y: t.apex_y,
            height: t.apex_height,
            elevation: None,
            is_noise: t.is_noise,
        })
        .collect();
    let report = evaluate(&detections, &stems, &thresholds)?;

    let pairs_path = output_path(&a.out_prefix, "pairs.csv");
    let mut out = create(&pairs_path)?;
    in_file(&pairs_path, io::write_pairs_csv(&mut out, &report))?;
    let summary = report.summary();
    let summary_path = output_path(&a.out_prefix, "summary.txt");
    let mut out = create(&summary_path)?;
    out.write_all(summary.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::io(&summary_path, e))?;
    say!("{}", summary.trim_end());
    Ok(())
}

fn scene_spec(a: &SynthArgs) -> Outcome<SceneSpec> {
    if let Some(path) = &a.spec {
        let mut spec: SceneSpec =
            serde_json::from_reader(open(path)?).map_err(|e| Failure::io(path, e))?;
        if let Some(seed) = a.seed {
            spec.seed = seed;
        }
        return Ok(spec);
    }
    let [w, h] = a.extent[..] else {
        unreachable!("clap enforces two values")
    };
    positive("extent", w.min(h))?;
    positive("density", a.density)?;
    if !a.slope.is_finite() {
        return Err(Failure::new(Failure::USAGE, "--slope must be finite"));
    }
    let seed = a.seed.unwrap_or(0);
    let mut params = StandParams::new(a.trees, (w, h), seed);
    if !a.shapes.is_empty() {
        params.shapes = a
            .shapes
            .iter()
            .map(|s| match s {
                Shape::Cone => CrownShape::Cone,
                Shape::Sphere => CrownShape::Sphere,
                Shape::Ellipsoid => CrownShape::Ellipsoid,
            })
            .collect();
    }
    let terrain = if a.slope == 0.0 {
        Terrain::Flat
    } else {
        Terrain::PlanarSlope { grade_pct: a.slope }
    };
    let mut spec = SceneSpec::new((w, h), terrain, synth::random_stand(&params)?, seed);
    spec.point_density = a.density;
    Ok(spec)
}

fn cmd_synth(a: &SynthArgs) -> Outcome {
    let spec = scene_spec(a)?;
    let scene = synth::generate_scene(&spec)?;

    let points_path = output_path(&a.out_prefix, "points.txt");
    let mut out = create(&points_path)?;
    in_file(&points_path, io::write_points(&mut out, &scene.points))?;
    let stems_path = output_path(&a.out_prefix, "stems.csv");
    let mut out = create(&stems_path)?;
    in_file(&stems_path, io::write_stems_csv(&mut out, &scene.stems))?;
    let labels_path = output_path(&a.out_prefix, "labels.csv");
    let mut out = create(&labels_path)?;
    in_file(&labels_path, io::write_labels_csv(&mut out, &scene.labels))?;

    let ground = scene.labels.iter().filter(|&&l| l == 0).count();
    say!("points={}", scene.points.len());
    say!("ground_points={ground}");
    say!("crown_points={}", scene.points.len() - ground);
    say!("trees={}", scene.stems.len());
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Outcome {
    let trees = in_file(&a.trees, io::read_trees_csv(open(&a.trees)?))?;
    let points = in_file(&a.points, io::read_points_csv(open(&a.points)?))?;
    let svg = in_file(&a.trees, render_svg(&trees, &points))?;
    let mut out = create(&a.out)?;
    out.write_all(svg.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::io(&a.out, e))?;
    say!("trees={} points={}", trees.len(), points.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes() {
        assert_eq!(output_path("", "trees.csv"), PathBuf::from("trees.csv"));
        assert_eq!(
            output_path("out/", "trees.csv"),
            PathBuf::from("out/trees.csv")
        );
        assert_eq!(
            output_path("out/run1", "trees.csv"),
            PathBuf::from("out/run1.trees.csv")
        );
    }

    #[test]
    fn exit_codes_by_error_kind() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(code(Error::Config("x".into())), Failure::USAGE);
        assert_eq!(code(Error::EmptyInput("x")), Failure::DEGENERATE);
        assert_eq!(code(Error::OutOfExtent { x: 0.0, y: 0.0 }), Failure::EXTENT);
        assert_eq!(
            code(Error::Parse {
                line: 1,
                msg: "x".into()
            }),
            Failure::IO
        );
    }

    #[test]
    fn custom_tiers_are_checked() {
        assert_eq!(thresholds(&[]).unwrap(), MatchThresholds::default());
        assert!(thresholds(&[(5.0, 0.1, 100), (4.0, 0.2, 70)]).is_err());
        assert_eq!(thresholds(&[(8.0, 0.15, 1)]).unwrap().tiers.len(), 1);
    }
}
