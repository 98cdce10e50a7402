use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use fstucker::diagnostics::{self, leverage_study, LeverageStudy};
use fstucker::ingest::{self, synth_cloud, synth_grid, Field, FieldKind, PointCloud, StructuredGrid};
use fstucker::model::{grid_nodes, FunctionalTucker};
use fstucker::pipeline::{self, compress, relative_misfit, Dataset};
use fstucker::sketch::{reestimate_core, self_convergence};
use fstucker::sthosvd::singular_value_decay;
use fstucker::tensor::relative_error;
use fstucker::{fstk, ften};
use serde_json::{json, Value};

use crate::args::*;
use crate::config::RunConfig;
use crate::failure::Failure;

type Outcome = Result<Value, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Model,
    Tensor,
    Cloud,
    Csv,
}

fn sniff(path: &Path) -> Result<FileKind, Failure> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path).map_err(|e| io_err(path, e))?;
    let n = f.read(&mut magic).map_err(|e| io_err(path, e))?;
    Ok(match &magic[..n] {
        m if m == fstk::MAGIC => FileKind::Model,
        m if m == ften::MAGIC => FileKind::Tensor,
        m if m == ingest::FPCL_MAGIC => FileKind::Cloud,
        _ => FileKind::Csv,
    })
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Re-labels I/O-class library errors with the offending path.
fn at<T>(path: &Path, r: fstucker::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_model(path: &Path) -> Result<FunctionalTucker, Failure> {
    at(path, fstk::deserialize(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

fn parse_domains(spec: &[String], d: usize) -> Result<Vec<(f64, f64)>, Failure> {
    if spec.len() != d {
        return Err(Failure::Param(format!("{} domain intervals for {d} modes", spec.len())));
    }
    spec.iter()
        .map(|s| {
            let (a, b) = s.split_once(':').ok_or_else(|| Failure::Param(format!("domain {s:?} is not lo:hi")))?;
            let parse =
                |t: &str| t.trim().parse::<f64>().map_err(|_| Failure::Param(format!("bad number in domain {s:?}")));
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn load_dataset(path: &Path, domain: Option<&[String]>) -> Result<Dataset, Failure> {
    match sniff(path)? {
        FileKind::Tensor => {
            let tensor = at(path, ften::load(path))?;
            let domains = match domain {
                Some(s) => parse_domains(s, tensor.order())?,
                None => vec![(0.0, 1.0); tensor.order()],
            };
            let grid = StructuredGrid::new(tensor.shape().to_vec(), domains)?;
            Ok(Dataset::Structured { tensor, grid })
        }
        FileKind::Model => Err(Failure::Param(format!("{} is a model, not a dataset", path.display()))),
        _ => Ok(Dataset::Scattered(at(path, ingest::load_point_cloud(path))?)),
    }
}

/// Scattered samples; a structured tensor is read as its grid nodes on `domains`.
fn load_cloud(path: &Path, domains: &[(f64, f64)]) -> Result<PointCloud, Failure> {
    match load_dataset(path, None)? {
        Dataset::Scattered(pc) => Ok(pc),
        Dataset::Structured { tensor, .. } => {
            if tensor.order() != domains.len() {
                return Err(Failure::Param(format!("{}-way tensor for a {}-way model", tensor.order(), domains.len())));
            }
            let grid = StructuredGrid::new(tensor.shape().to_vec(), domains.to_vec())?;
            let d = grid.order();
            let mut pts = vec![0.0; grid.len() * d];
            for (lin, p) in pts.chunks_exact_mut(d).enumerate() {
                grid.node_into(lin, p);
            }
            Ok(PointCloud::new(d, pts, tensor.into_data())?)
        }
    }
}

pub fn compress_cmd(cfg: &mut RunConfig, a: &CompressArgs) -> Outcome {
    cfg.apply_tucker(&a.tucker);
    let c = &mut cfg.compress;
    if let Some(g) = &a.grid {
        c.grid = Some(g.clone());
    }
    if let Some(f) = a.subsample_frac {
        c.subsample_fraction = f;
    }
    if let Some(k) = a.idw_k {
        c.idw.neighbors = Some(k);
    }
    if let Some(v) = a.validation_points {
        c.validation_points = v;
    }
    let data = load_dataset(&a.input, a.domain.as_deref())?;
    let out = compress(&data, &cfg.compress)?;
    at(&a.output, fstk::serialize(&out.model, &a.output))?;
    let r = &out.report;
    let nnz_total: usize = r.nnz.iter().flatten().sum();
    eprintln!("ranks {:?} (ST-HOSVD error {:.3e})", r.ranks, r.tucker_error);
    eprintln!(
        "{} mode functions, {nnz_total} nonzero coefficients, {} wavelet fits, {} flagged",
        r.nnz.iter().map(Vec::len).sum::<usize>(),
        r.wavelet_fits.iter().sum::<usize>(),
        r.flagged_fits
    );
    eprintln!(
        "storage {} values ({} bytes + {} index bytes); compression ratio {:.1} ({:.1} with indices)",
        r.storage.coeff_count,
        r.storage.value_bytes,
        r.storage.index_bytes,
        r.compression_ratio,
        r.compression_ratio_with_index
    );
    eprintln!("validation error {:.3e} over {} points", r.validation_error, r.validation_points);
    eprintln!("wrote {}", a.output.display());
    Ok(json!({ "command": "compress", "output": a.output, "report": r }))
}

pub fn reestimate_cmd(cfg: &mut RunConfig, a: &ReestimateArgs) -> Outcome {
    cfg.apply_sketch(&a.sketch)?;
    let model = load_model(&a.model)?;
    let data = load_cloud(&a.data, &model.domains())?;
    let out = reestimate_core(&model, &data, &cfg.sketch)?;
    let mut updated = out.model;
    if let Value::Object(map) = &mut updated.metadata.provenance {
        map.insert("reestimate".into(), json!(cfg.sketch));
    } else {
        updated.metadata.provenance = json!({ "reestimate": cfg.sketch });
    }
    at(&a.output, fstk::serialize(&updated, &a.output))?;
    let r = &out.report;
    eprintln!(
        "S = {} sampled rows ({} sketch rows) from {} working rows, R = {}",
        r.sample_rows,
        r.sketch_rows,
        r.working_rows,
        model.core().len()
    );
    match (r.residual_before, r.residual_after) {
        (Some(b), Some(f)) => eprintln!("validation residual {b:.3e} -> {f:.3e} over {} points", r.validation_rows),
        _ => eprintln!("no validation rows held out"),
    }
    if r.rank_deficient {
        eprintln!("warning: sketched system was rank deficient; minimum-norm core used");
    }
    eprintln!("wrote {}", a.output.display());
    Ok(json!({ "command": "reestimate", "output": a.output, "core_size": model.core().len(), "report": r }))
}

fn is_ften(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ften"))
}

pub fn reconstruct_cmd(a: &ReconstructArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let d = model.order();
    let domains = model.domains();
    if let Some(sizes) = &a.grid {
        if sizes.len() != d {
            return Err(Failure::Param(format!("{} grid sizes for a {d}-way model", sizes.len())));
        }
        let nodes =
            sizes.iter().zip(&domains).map(|(&n, &dom)| grid_nodes(n, dom)).collect::<fstucker::Result<Vec<_>>>()?;
        let t = model.evaluate_grid(&nodes)?;
        if is_ften(&a.output) {
            at(&a.output, ften::save(&a.output, &t, ften::Dtype::F64))?;
        } else {
            let mut w = create(&a.output)?;
            let header: Vec<String> = (1..=d).map(|k| format!("y{k}")).chain(["value".into()]).collect();
            writeln!(w, "{}", header.join(","))?;
            let grid = StructuredGrid::new(sizes.clone(), domains.clone())?;
            let mut y = vec![0.0; d];
            for (lin, v) in t.data().iter().enumerate() {
                grid.node_into(lin, &mut y);
                let coords: Vec<String> = y.iter().map(f64::to_string).collect();
                writeln!(w, "{},{v}", coords.join(","))?;
            }
            w.flush()?;
        }
        let mut summary = json!({ "command": "reconstruct", "output": a.output, "grid": sizes, "values": t.len() });
        eprintln!("evaluated {} grid nodes; wrote {}", t.len(), a.output.display());
        if let Some(rp) = &a.reference {
            let reference = at(rp, ften::load(rp))?;
            let err = relative_error(&reference, &t)?;
            eprintln!("relative error against {}: {err:.3e}", rp.display());
            summary["relative_error"] = json!(err);
        }
        return Ok(summary);
    }
    let Some(pp) = &a.points else {
        return Err(Failure::Param("give either --grid or --points".into()));
    };
    if is_ften(&a.output) {
        return Err(Failure::Param("point reconstructions are written as CSV".into()));
    }
    let file = BufReader::new(File::open(pp).map_err(|e| io_err(pp, e))?);
    let (points, reference) = at(pp, ingest::read_point_list(file, d))?;
    let mut values = Vec::with_capacity(points.len() / d);
    let mut outside = Vec::new();
    for (i, y) in points.chunks_exact(d).enumerate() {
        match model.evaluate(y) {
            Ok(v) => values.push(v),
            Err(fstucker::Error::Domain { value, lo, hi }) => {
                eprintln!("point {i}: coordinate {value} outside [{lo}, {hi}]");
                outside.push(i);
                values.push(f64::NAN);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut w = create(&a.output)?;
    let header: Vec<String> = (1..=d).map(|k| format!("y{k}")).chain(["value".into()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for (y, v) in points.chunks_exact(d).zip(&values) {
        let coords: Vec<String> = y.iter().map(f64::to_string).collect();
        writeln!(w, "{},{v}", coords.join(","))?;
    }
    w.flush()?;
    let mut summary = json!({
        "command": "reconstruct",
        "output": a.output,
        "points": values.len(),
        "out_of_domain": outside,
    });
    if let Some(truth) = reference {
        let (p, t): (Vec<f64>, Vec<f64>) =
            values.iter().zip(&truth).filter(|(v, _)| v.is_finite()).map(|(a, b)| (*a, *b)).unzip();
        if !t.is_empty() {
            if let Ok(err) = relative_misfit(&p, &t) {
                eprintln!("relative error against listed values: {err:.3e}");
                summary["relative_error"] = json!(err);
            }
        }
    }
    eprintln!(
        "evaluated {} points ({} outside the model box); wrote {}",
        values.len(),
        outside.len(),
        a.output.display()
    );
    Ok(summary)
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn slice_cmd(a: &SliceArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let d = model.order();
    if a.free.len() != 2 || a.resolution.len() != 2 {
        return Err(Failure::Param("--free and --resolution each take two values".into()));
    }
    let fixed = match &a.fixed {
        Some(f) => f.clone(),
        None => model.domains().iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect(),
    };
    if fixed.len() != d {
        return Err(Failure::Param(format!("--fixed needs {d} values, got {}", fixed.len())));
    }
    let s = pipeline::slice(&model, (a.free[0], a.free[1]), &fixed, (a.resolution[0], a.resolution[1]))?;
    let (pgm, csv) = (with_ext(&a.output, "pgm"), with_ext(&a.output, "csv"));
    let mut w = create(&pgm)?;
    let (lo, hi) = diagnostics::write_pgm(&mut w, &s)?;
    w.flush()?;
    let mut w = create(&csv)?;
    diagnostics::write_slice_csv(&mut w, &s)?;
    w.flush()?;
    eprintln!(
        "slice over modes {:?}: values in [{lo:.4e}, {hi:.4e}]; wrote {} and {}",
        a.free,
        pgm.display(),
        csv.display()
    );
    Ok(json!({ "command": "slice", "image": pgm, "csv": csv, "min": lo, "max": hi, "free": a.free, "fixed": fixed }))
}

pub fn diagnostics_cmd(cfg: &mut RunConfig, a: &DiagnosticsArgs) -> Outcome {
    cfg.apply_sketch(&a.sketch)?;
    let model = load_model(&a.model)?;
    fs::create_dir_all(&a.output).map_err(|e| io_err(&a.output, e))?;
    let decay = singular_value_decay_of(&model);
    let decay_path = a.output.join("decay.csv");
    let mut w = create(&decay_path)?;
    diagnostics::write_decay_csv(&mut w, &decay)?;
    w.flush()?;
    eprintln!("wrote {} ({} core entries)", decay_path.display(), decay.len());
    let mut summary = json!({ "command": "diagnostics", "decay": decay_path });

    if let Some(dp) = &a.data {
        let data = load_cloud(dp, &model.domains())?;
        let study = leverage_study(&model, &data, a.leverage_rows, cfg.sketch.transform, cfg.sketch.seed)?;
        let (before, after) = study.histograms(a.bins)?;
        let hist_path = a.output.join("leverage_histogram.csv");
        let mut w = create(&hist_path)?;
        diagnostics::write_histogram_csv(&mut w, &before, &after)?;
        w.flush()?;
        let (rb, ra) = (LeverageStudy::max_mean_ratio(&study.before), LeverageStudy::max_mean_ratio(&study.after));
        eprintln!(
            "leverage scores on {}x{}: max/mean {rb:.2} before mixing, {ra:.2} after; wrote {}",
            study.rows,
            study.columns,
            hist_path.display()
        );

        let r = model.core().len();
        let s_values = match &a.s_values {
            Some(s) => s.clone(),
            None => [1.2, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0].iter().map(|m| (m * r as f64).ceil() as usize).collect(),
        };
        let curve = self_convergence(&model, &data, &s_values, &cfg.sketch)?;
        let conv_path = a.output.join("self_convergence.csv");
        let mut w = create(&conv_path)?;
        diagnostics::write_convergence_csv(&mut w, &curve)?;
        w.flush()?;
        for p in &curve {
            eprintln!("  S {} -> {}: relative change {:.3e}", p.s1, p.s2, p.delta);
        }
        eprintln!("wrote {}", conv_path.display());
        summary["leverage"] = json!({
            "path": hist_path, "rows": study.rows, "columns": study.columns,
            "max_mean_before": rb, "max_mean_after": ra,
            "mass_before": before.total(), "mass_after": after.total(),
        });
        summary["self_convergence"] = json!({ "path": conv_path, "points": curve });
    }
    Ok(summary)
}

fn singular_value_decay_of(model: &FunctionalTucker) -> Vec<f64> {
    let dec = fstucker::sthosvd::TuckerDecomposition {
        core: model.core().clone(),
        factors: Vec::new(),
        achieved_error: model.metadata.tucker_error,
    };
    singular_value_decay(&dec)
}

pub fn synth_cmd(cfg: &mut RunConfig, a: &SynthArgs) -> Outcome {
    let kind: FieldKind = a.kind.parse()?;
    let p = &mut cfg.synth;
    if let Some(c) = a.coupling {
        p.coupling = c;
    }
    if let Some(t) = a.thickness {
        p.thickness = t;
    }
    if let Some(n) = a.noise {
        p.noise = n;
    }
    match (&a.shape, a.points) {
        (Some(shape), None) => {
            let field = Field::new(kind, shape.len(), *p, cfg.seed)?;
            let grid = StructuredGrid::unit(shape.clone())?;
            let t = synth_grid(&field, &grid, cfg.seed)?;
            at(&a.output, ften::save(&a.output, &t, ften::Dtype::F64))?;
            eprintln!("wrote {:?} {} grid to {}", shape, a.kind, a.output.display());
            Ok(json!({ "command": "synth", "output": a.output, "kind": kind, "shape": shape, "params": p }))
        }
        (None, Some(q)) => {
            let d = a.dim.unwrap_or(3);
            let field = Field::new(kind, d, *p, cfg.seed)?;
            let pc = synth_cloud(&field, q, cfg.seed)?;
            at(&a.output, ingest::save_point_cloud(&a.output, &pc))?;
            eprintln!("wrote {q} {d}-D {} samples to {}", a.kind, a.output.display());
            Ok(json!({ "command": "synth", "output": a.output, "kind": kind, "points": q, "dim": d, "params": p }))
        }
        _ => Err(Failure::Param("give exactly one of --shape (gridded) or --points (scattered)".into())),
    }
}

pub fn info_cmd(a: &InfoArgs) -> Outcome {
    let path = &a.path;
    match sniff(path)? {
        FileKind::Model => {
            let m = load_model(path)?;
            let storage = m.storage_cost();
            let modes: Vec<Value> = m
                .modes()
                .iter()
                .map(|mode| {
                    json!({
                        "domain": mode.domain,
                        "functions": mode.functions.iter().map(|f| json!({
                            "basis": f.basis, "nnz": f.nnz(), "loo_error": f.loo_error, "residual_rel": f.residual_rel,
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect();
            eprintln!(
                "FSTK model: ranks {:?}, grid {:?}, {} stored values",
                m.ranks(),
                m.metadata.grid_shape,
                storage.coeff_count
            );
            Ok(json!({
                "command": "info", "kind": "model", "ranks": m.ranks(), "storage": storage,
                "metadata": m.metadata, "modes": modes,
            }))
        }
        FileKind::Tensor => {
            let t = at(path, ften::load(path))?;
            eprintln!("FTEN tensor: shape {:?}, Frobenius norm {:.6e}", t.shape(), t.fro_norm());
            Ok(json!({ "command": "info", "kind": "tensor", "shape": t.shape(), "fro_norm": t.fro_norm() }))
        }
        FileKind::Cloud | FileKind::Csv => {
            let pc = at(path, ingest::load_point_cloud(path))?;
            eprintln!("point cloud: {} points in {} dimensions", pc.len(), pc.dim());
            Ok(
                json!({ "command": "info", "kind": "points", "points": pc.len(), "dim": pc.dim(), "bounding_box": pc.bounding_box() }),
            )
        }
    }
}
