//! Command implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use serde::Serialize;

use geodesic_atlas::error::AtlasError;
use geodesic_atlas::export;
use geodesic_atlas::field::{self, DistanceField, DistanceFn, FieldParams, MlpArch};
use geodesic_atlas::geodesics::{self, DiscreteCurve};
use geodesic_atlas::geometry::{ChartPoint, ImmersedManifold, TangentVector};
use geodesic_atlas::manifolds;
use geodesic_atlas::oracle;
use geodesic_atlas::sampling::{self, ChainConfig, CurvatureKde, MixtureSampler};
use geodesic_atlas::train;

use crate::config::{
    parse_point, resolve_chains, resolve_train, FileConfig, Preset, ResolvedConfig,
};
use crate::{ChainFlags, CommonArgs, TrainFlags};

/// Offset separating the batch-sampler RNG stream from the chain streams.
const SAMPLER_SEED_OFFSET: u64 = 1_000_003;

struct Resolved {
    manifold: ImmersedManifold,
    cfg: ResolvedConfig,
    plain_mlp: bool,
}

fn resolve(
    common: &CommonArgs,
    train_flags: Option<&TrainFlags>,
    chain_flags: Option<&ChainFlags>,
    origin: Option<&str>,
) -> Result<Resolved> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let name = if common.manifold.is_empty() {
        file.manifold.clone().unwrap_or_default()
    } else {
        common.manifold.clone()
    };
    let scale = common.scale.or(file.scale).unwrap_or(1.0);
    let seed = common.seed.or(file.seed).unwrap_or(0);
    let preset = common.preset.or(file.preset).unwrap_or(Preset::Desk);
    let mix_weight = chain_flags
        .and_then(|c| c.mix_weight)
        .or(file.mix_weight)
        .unwrap_or(0.5);

    let mut train_over = file.train.clone();
    if let Some(tf) = train_flags {
        let flag_over = crate::config::TrainOverrides {
            adam_steps: tf.adam_steps,
            lbfgs_steps: tf.lbfgs_steps,
            batch_size: tf.batch_size,
            heldout_grid: tf.heldout_grid,
            ..Default::default()
        };
        train_over = flag_over.merged_over(&train_over);
    }
    let mut chain_over = file.chains.clone();
    if let Some(cf) = chain_flags {
        let flag_over = crate::config::ChainOverrides {
            n_chains: cf.chains,
            burn_in: cf.burn_in,
            n_keep: cf.keep,
            proposal_std: cf.proposal_std,
        };
        chain_over = flag_over.merged_over(&chain_over);
    }

    let origin = match origin {
        Some(s) => Some(parse_point(s)?),
        None => file.origin.clone(),
    };

    let manifold = manifolds::by_name(&name, scale)
        .map_err(|e| anyhow!("{e}"))?;
    let cfg = ResolvedConfig {
        manifold: name,
        scale,
        origin,
        seed,
        preset,
        mix_weight,
        train: resolve_train(preset, seed, &train_over),
        chains: resolve_chains(preset, seed, &chain_over),
    };
    Ok(Resolved {
        manifold,
        cfg,
        plain_mlp: train_flags.map(|t| t.plain_mlp).unwrap_or(false),
    })
}

fn chart_point(m: &ImmersedManifold, coords: Vec<f64>) -> Result<ChartPoint> {
    let q = ChartPoint::try_new(coords).map_err(|e| anyhow!("{e}"))?;
    if !m.contains(&q) {
        bail!(
            "point {:?} lies outside the domain {:?} of '{}'",
            q.coords,
            m.domain(),
            m.name()
        );
    }
    Ok(q)
}

/// Curvature evaluation point for grid exports: the finite-difference
/// stencil of the curvature needs room, so boundary nodes are evaluated a
/// stencil-width inside.
fn ricci_at_clamped(m: &ImmersedManifold, q: &ChartPoint) -> Result<f64> {
    let margin = geodesic_atlas::geometry::RICCI_FD_STEP;
    let coords: Vec<f64> = q
        .coords
        .iter()
        .zip(m.domain())
        .map(|(&c, &(lo, hi))| c.clamp(lo + margin, hi - margin))
        .collect();
    m.ricci_scalar(&ChartPoint { coords })
        .map_err(|e| anyhow!("{e}"))
}

pub fn describe(
    common: CommonArgs,
    at: Vec<String>,
    grid: Option<usize>,
    out_dir: PathBuf,
) -> Result<()> {
    let r = resolve(&common, None, None, None)?;
    let m = &r.manifold;
    println!(
        "manifold '{}' (scale {}): intrinsic dim {}, ambient dim {}, domain {:?}",
        m.name(),
        m.scale(),
        m.intrinsic_dim(),
        m.ambient_dim(),
        m.domain()
    );
    for spec in &at {
        let q = chart_point(m, parse_point(spec)?)?;
        let data = m.christoffel(&q).map_err(|e| anyhow!("{e}"))?;
        let ricci = m.ricci_scalar(&q).map_err(|e| anyhow!("{e}"))?;
        println!("\nat {:?}:", q.coords);
        println!("  g        = {:?}", data.g);
        println!("  g^-1     = {:?}", data.g_inv);
        let gamma = data.christoffel.as_ref().unwrap();
        for k in 0..m.intrinsic_dim() {
            for i in 0..m.intrinsic_dim() {
                for j in i..m.intrinsic_dim() {
                    let v = gamma[[k, i, j]];
                    if v.abs() > 1e-15 {
                        println!("  Gamma^{k}_{i}{j} = {v:.9}");
                    }
                }
            }
        }
        println!("  ricci R  = {ricci:.9}");
    }
    if let Some(res) = grid {
        if res < 2 {
            bail!("--grid must be >= 2");
        }
        let pts = export::grid_points(m.domain(), res);
        let mut rows = Vec::with_capacity(pts.len());
        for q in &pts {
            let ricci = ricci_at_clamped(m, q)?;
            rows.push(vec![q.coords[0], q.coords[1], ricci]);
        }
        let csv = export::table_csv(&["x", "y", "ricci"], &rows, &r.cfg.echo());
        let path = out_dir.join("curvature.csv");
        export::write_file(&path, &csv).map_err(|e| anyhow!("{e}"))?;
        println!("\nwrote {} ({} rows)", path.display(), rows.len());
    }
    Ok(())
}

fn run_chains_per_chain(
    m: &ImmersedManifold,
    chains: &ChainConfig,
) -> Result<Vec<Vec<ChartPoint>>> {
    chains.validate().map_err(|e| anyhow!("{e}"))?;
    use rayon::prelude::*;
    Ok((0..chains.n_chains)
        .into_par_iter()
        .map(|c| {
            sampling::mh_chain(
                |q| sampling::curvature_logdensity(m, q),
                m.domain(),
                chains,
                c,
            )
        })
        .collect())
}

pub fn sample(common: CommonArgs, chains: ChainFlags, grid: usize, out_dir: PathBuf) -> Result<()> {
    let r = resolve(&common, None, Some(&chains), None)?;
    let m = &r.manifold;
    let echo = r.cfg.echo();

    let per_chain = run_chains_per_chain(m, &r.cfg.chains)?;
    let samples_csv = export::samples_csv(&per_chain, m.intrinsic_dim(), &echo);
    let samples_path = out_dir.join("samples.csv");
    export::write_file(&samples_path, &samples_csv).map_err(|e| anyhow!("{e}"))?;

    let pooled: Vec<ChartPoint> = per_chain.into_iter().flatten().collect();
    let n_pooled = pooled.len();
    let kde = CurvatureKde::from_samples(pooled, m.domain().to_vec(), None)
        .map_err(|e| anyhow!("{e}"))?;
    let pts = export::grid_points(m.domain(), grid);
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|q| vec![q.coords[0], q.coords[1], kde.pdf(q)])
        .collect();
    let kde_csv = export::table_csv(&["x", "y", "density"], &rows, &echo);
    let kde_path = out_dir.join("kde_grid.csv");
    export::write_file(&kde_path, &kde_csv).map_err(|e| anyhow!("{e}"))?;

    println!(
        "pooled {n_pooled} samples from {} chains (bandwidth {:?})",
        r.cfg.chains.n_chains, kde.bandwidth
    );
    println!("wrote {}", samples_path.display());
    println!("wrote {}", kde_path.display());
    Ok(())
}

fn build_sampler(m: &ImmersedManifold, cfg: &ResolvedConfig) -> Result<MixtureSampler> {
    sampling::curvature_mixture_sampler(
        m,
        &cfg.chains,
        cfg.mix_weight,
        cfg.seed.wrapping_add(SAMPLER_SEED_OFFSET),
    )
    .map_err(|e| anyhow!("{e}"))
}

pub fn train(
    common: CommonArgs,
    origin: String,
    train_flags: TrainFlags,
    chain_flags: ChainFlags,
    out_dir: PathBuf,
) -> Result<()> {
    let r = resolve(&common, Some(&train_flags), Some(&chain_flags), Some(&origin))?;
    let m = &r.manifold;
    let p = chart_point(
        m,
        r.cfg
            .origin
            .clone()
            .ok_or_else(|| anyhow!("--origin is required"))?,
    )?;

    std::fs::create_dir_all(&out_dir)?;
    let mut sampler = build_sampler(m, &r.cfg)?;
    let arch = if r.plain_mlp {
        MlpArch::plain(m.intrinsic_dim(), 128, 4)
    } else {
        MlpArch::modified(m.intrinsic_dim(), 128, 4)
    };
    let init = FieldParams::init_with_arch(m, &p, arch, r.cfg.seed).map_err(|e| anyhow!("{e}"))?;
    let start = DistanceField::new(init, m.clone()).map_err(|e| anyhow!("{e}"))?;
    let nan_dump = out_dir.join("checkpoint.nan-dump.json");
    let (field, report) = train::train_field(start, &r.cfg.train, &mut sampler, Some(&nan_dump))
        .map_err(|e| anyhow!("{e}"))?;

    let ckpt_path = out_dir.join("checkpoint.json");
    field::save_checkpoint(&field, &ckpt_path).map_err(|e| anyhow!("{e}"))?;
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, report.to_json())?;

    println!(
        "trained field on '{}' from {:?} ({} params)",
        m.name(),
        p.coords,
        report.n_params
    );
    println!(
        "residual audit: p50 {:.3e}, p90 {:.3e}, max {:.3e} over {} held-out points",
        report.residual_abs_p50,
        report.residual_abs_p90,
        report.residual_abs_max,
        report.heldout_points
    );
    for e in &report.lr_echo {
        if matches!(e.step, 0 | 5000 | 7000) {
            println!("lr @ step {}: {}", e.step, e.lr);
        }
    }
    println!("wrote {}", ckpt_path.display());
    println!("wrote {}", report_path.display());
    Ok(())
}

fn load_field(checkpoint: &Path) -> Result<DistanceField> {
    let (name, scale, _domain) =
        field::manifold_spec(checkpoint).map_err(|e| anyhow!("{e}"))?;
    let m = manifolds::by_name(&name, scale).map_err(|e| anyhow!("{e}"))?;
    field::load_checkpoint(checkpoint, &m).map_err(|e| anyhow!("{e}"))
}

pub fn field(checkpoint: PathBuf, grid: usize, out: Option<PathBuf>) -> Result<()> {
    if grid < 2 {
        bail!("--grid must be >= 2");
    }
    let field = load_field(&checkpoint)?;
    let m = &field.manifold;
    let echo = vec![
        (
            "checkpoint",
            checkpoint.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        ),
        ("manifold", format!("{} (scale {})", m.name(), m.scale())),
        ("origin", format!("{:?}", field.origin().coords)),
        ("seed", field.params.seed.to_string()),
        ("grid", grid.to_string()),
    ];
    let pts = export::grid_points(m.domain(), grid);
    let mut rows = Vec::with_capacity(pts.len());
    for q in &pts {
        let eval = field.evaluate(q).map_err(|e| anyhow!("{e}"))?;
        rows.push(vec![
            q.coords[0],
            q.coords[1],
            eval.phi,
            eval.grad_chart[0],
            eval.grad_chart[1],
            eval.grad_intrinsic[0],
            eval.grad_intrinsic[1],
        ]);
    }
    let csv = export::table_csv(
        &["x", "y", "phi", "gradx", "grady", "flowx", "flowy"],
        &rows,
        &echo.iter().map(|(k, v)| (*k, v.clone())).collect::<Vec<_>>(),
    );
    let out = out.unwrap_or_else(|| checkpoint.with_file_name("field.csv"));
    export::write_file(&out, &csv).map_err(|e| anyhow!("{e}"))?;
    println!("wrote {} ({} rows)", out.display(), rows.len());
    Ok(())
}

#[derive(Serialize)]
struct TraceSummary {
    start: Vec<f64>,
    phi_start: f64,
    step: f64,
    flow_points: usize,
    geodesic_points: usize,
    flow_length: f64,
    length_vs_phi_rel_err: f64,
    max_pointwise_deviation: f64,
    stagnated: bool,
}

/// Shared by `trace` and the acceptance suite: flow trace, comparison
/// geodesic, pointwise deviation.
pub fn trace_pair(
    field: &DistanceField,
    q: &ChartPoint,
    step: f64,
    max_steps: usize,
) -> Result<(DiscreteCurve, DiscreteCurve, TraceStats)> {
    let m = &field.manifold;
    let eval = field.evaluate(q).map_err(|e| anyhow!("{e}"))?;
    let phi_start = eval.phi;

    let (flow, stagnated) =
        match geodesics::trace_flow(field, q, step, max_steps, None) {
            Ok(c) => (c, false),
            Err(AtlasError::Stagnation { curve, .. }) => (*curve, true),
            Err(e) => return Err(anyhow!("{e}")),
        };

    // geodesic launched along the initial (negative) flow direction
    let v0 = TangentVector::new(
        q.clone(),
        eval.grad_intrinsic.iter().map(|g| -g).collect(),
    )
    .map_err(|e| anyhow!("{e}"))?;
    let t_end = phi_start - step;
    let n_steps = (t_end / step).round().max(1.0) as usize;
    let geo = match geodesics::integrate_geodesic(m, q, &v0, t_end, n_steps) {
        Ok(c) => c,
        Err(AtlasError::DomainExit { curve }) => *curve,
        Err(e) => return Err(anyhow!("{e}")),
    };

    let mut max_dev = 0.0_f64;
    for k in 0..flow.points.len().min(geo.points.len()) {
        let d: f64 = flow.points[k]
            .coords
            .iter()
            .zip(&geo.points[k].coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_dev = max_dev.max(d);
    }
    let flow_length = geodesics::curve_length(m, &flow).map_err(|e| anyhow!("{e}"))?;
    Ok((
        flow,
        geo,
        TraceStats {
            phi_start,
            flow_length,
            max_dev,
            stagnated,
        },
    ))
}

pub struct TraceStats {
    pub phi_start: f64,
    pub flow_length: f64,
    pub max_dev: f64,
    pub stagnated: bool,
}

pub fn trace(
    checkpoint: PathBuf,
    from: String,
    step: f64,
    max_steps: Option<usize>,
    out_dir: PathBuf,
) -> Result<()> {
    if step <= 0.0 {
        bail!("--step must be > 0");
    }
    let field = load_field(&checkpoint)?;
    let m = field.manifold.clone();
    let q = chart_point(&m, parse_point(&from)?)?;
    let phi_start = field.evaluate(&q).map_err(|e| anyhow!("{e}"))?.phi;
    let max_steps = max_steps.unwrap_or(((3.0 * phi_start / step) as usize).max(100));

    let (flow, geo, stats) = trace_pair(&field, &q, step, max_steps)?;

    let echo = vec![
        ("start", format!("{:?}", q.coords)),
        ("step", step.to_string()),
        ("seed", field.params.seed.to_string()),
    ];
    let echo_ref: Vec<(&str, String)> = echo.iter().map(|(k, v)| (*k, v.clone())).collect();
    export::write_file(
        &out_dir.join("flow_path.csv"),
        &export::curve_csv(&m, &flow, &echo_ref).map_err(|e| anyhow!("{e}"))?,
    )
    .map_err(|e| anyhow!("{e}"))?;
    export::write_file(
        &out_dir.join("geodesic_path.csv"),
        &export::curve_csv(&m, &geo, &echo_ref).map_err(|e| anyhow!("{e}"))?,
    )
    .map_err(|e| anyhow!("{e}"))?;

    let summary = TraceSummary {
        start: q.coords.clone(),
        phi_start: stats.phi_start,
        step,
        flow_points: flow.points.len(),
        geodesic_points: geo.points.len(),
        flow_length: stats.flow_length,
        length_vs_phi_rel_err: (stats.flow_length - stats.phi_start).abs() / stats.phi_start,
        max_pointwise_deviation: stats.max_dev,
        stagnated: stats.stagnated,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("trace_summary.json"), json)?;

    println!(
        "phi(start) = {:.6}; traced {} points, length {:.6} ({:+.2}% vs phi); max deviation from geodesic {:.4}",
        stats.phi_start,
        flow.points.len(),
        stats.flow_length,
        100.0 * (stats.flow_length - stats.phi_start) / stats.phi_start,
        stats.max_dev
    );
    if stats.stagnated {
        bail!(
            "flow trace stagnated after {} points (partial path written to {})",
            flow.points.len(),
            out_dir.join("flow_path.csv").display()
        );
    }
    println!("wrote {}", out_dir.join("flow_path.csv").display());
    println!("wrote {}", out_dir.join("geodesic_path.csv").display());
    println!("wrote {}", out_dir.join("trace_summary.json").display());
    Ok(())
}

#[derive(Serialize)]
struct SymmetrySummary {
    grid_k: usize,
    origins: usize,
    trained: usize,
    failures: Vec<String>,
    ordered_pairs: usize,
    spearman_asymmetry_vs_distance: f64,
    mean_relative_asymmetry: f64,
}

pub fn symmetry(
    common: CommonArgs,
    grid_k: usize,
    oracle_res: usize,
    train_flags: TrainFlags,
    chain_flags: ChainFlags,
    out_dir: PathBuf,
) -> Result<()> {
    if grid_k < 2 {
        bail!("--grid-k must be >= 2");
    }
    let r = resolve(&common, Some(&train_flags), Some(&chain_flags), None)?;
    let m = &r.manifold;
    std::fs::create_dir_all(&out_dir)?;

    // origins at cell centres of a grid_k x grid_k partition of the domain
    let mut origins = Vec::new();
    for iy in 0..grid_k {
        for ix in 0..grid_k {
            let coord = |k: usize, i: usize| {
                let (lo, hi) = m.domain()[k];
                lo + (hi - lo) * (i as f64 + 0.5) / grid_k as f64
            };
            origins.push(ChartPoint {
                coords: vec![coord(0, ix), coord(1, iy)],
            });
        }
    }

    // curvature sampling is origin-independent: build the KDE once
    let pooled = sampling::run_chains(
        |q| sampling::curvature_logdensity(m, q),
        m.domain(),
        &r.cfg.chains,
    );
    let kde = CurvatureKde::from_samples(pooled, m.domain().to_vec(), None)
        .map_err(|e| anyhow!("{e}"))?;

    let mut fields: Vec<Option<DistanceField>> = Vec::with_capacity(origins.len());
    let mut failures = Vec::new();
    for (i, p) in origins.iter().enumerate() {
        let seed_i = r.cfg.seed.wrapping_add(i as u64);
        let mut cfg_i = r.cfg.train.clone();
        cfg_i.seed = seed_i;
        let mut sampler = MixtureSampler::new(
            kde.clone(),
            r.cfg.mix_weight,
            seed_i.wrapping_add(SAMPLER_SEED_OFFSET),
        )
        .map_err(|e| anyhow!("{e}"))?;
        match train::train(m, p, &cfg_i, &mut sampler, None) {
            Ok((field, report)) => {
                eprintln!(
                    "origin {i} {:?}: p90 residual {:.3e} ({:.1}s)",
                    p.coords, report.residual_abs_p90, report.wall_clock_secs
                );
                fields.push(Some(field));
            }
            Err(e) => {
                eprintln!("origin {i} {:?}: training failed: {e}", p.coords);
                failures.push(format!("origin {i} {:?}: {e}", p.coords));
                fields.push(None);
            }
        }
    }

    // oracle distances between origins (one Dijkstra per origin)
    let graph = oracle::GridGraph::new(m, oracle_res).map_err(|e| anyhow!("{e}"))?;
    let mut oracle_dists = vec![vec![f64::NAN; origins.len()]; origins.len()];
    for (i, p) in origins.iter().enumerate() {
        let table = oracle::dijkstra(m, &graph, graph.nearest_node(p)).map_err(|e| anyhow!("{e}"))?;
        for (j, q) in origins.iter().enumerate() {
            oracle_dists[i][j] = table[graph.nearest_node(q)];
        }
    }

    let mut rows = Vec::new();
    let mut asym = Vec::new();
    let mut mean_dist = Vec::new();
    let mut rel_asym = Vec::new();
    for i in 0..origins.len() {
        for j in 0..origins.len() {
            if i == j {
                continue;
            }
            let (Some(fi), Some(fj)) = (&fields[i], &fields[j]) else {
                continue;
            };
            let phi_qp = fi.evaluate(&origins[j]).map_err(|e| anyhow!("{e}"))?.phi;
            let phi_pq = fj.evaluate(&origins[i]).map_err(|e| anyhow!("{e}"))?.phi;
            rows.push(vec![
                origins[i].coords[0],
                origins[i].coords[1],
                origins[j].coords[0],
                origins[j].coords[1],
                phi_qp,
                phi_pq,
                oracle_dists[i][j],
            ]);
            if i < j {
                let mean = 0.5 * (phi_qp + phi_pq);
                asym.push((phi_qp - phi_pq).abs());
                mean_dist.push(mean);
                rel_asym.push((phi_qp - phi_pq).abs() / mean);
            }
        }
    }

    let csv = export::table_csv(
        &["pi_x", "pi_y", "pj_x", "pj_y", "phi_qp", "phi_pq", "oracle"],
        &rows,
        &r.cfg.echo(),
    );
    let pairs_path = out_dir.join("pairs.csv");
    export::write_file(&pairs_path, &csv).map_err(|e| anyhow!("{e}"))?;

    let spearman = if asym.len() >= 3 {
        oracle::spearman(&asym, &mean_dist)
    } else {
        f64::NAN
    };
    let mean_rel = rel_asym.iter().sum::<f64>() / rel_asym.len().max(1) as f64;
    let summary = SymmetrySummary {
        grid_k,
        origins: origins.len(),
        trained: fields.iter().filter(|f| f.is_some()).count(),
        failures,
        ordered_pairs: rows.len(),
        spearman_asymmetry_vs_distance: spearman,
        mean_relative_asymmetry: mean_rel,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    std::fs::write(out_dir.join("symmetry_summary.json"), json)?;

    println!(
        "{} ordered pairs from {}/{} fields; Spearman(asymmetry, distance) = {:.3}; mean relative asymmetry = {:.2}%",
        rows.len(),
        summary.trained,
        summary.origins,
        spearman,
        100.0 * mean_rel
    );
    println!("wrote {}", pairs_path.display());
    Ok(())
}
