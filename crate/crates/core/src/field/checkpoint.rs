//! Checkpoint persistence.
//!
//! A checkpoint is a single JSON document:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "manifold": { "name", "scale", "domain": [[lo, hi], ...] },
//!   "origin": [q1, ..., qD],
//!   "seed": u64,
//!   "arch": { "input_dim", "width", "depth", "activation", "variant", "head" },
//!   "params": { "w_u": [[..]], "b_u": [..], "w_v", "b_v",
//!               "hidden": [{ "w": [[..]], "b": [..] }, ...],
//!               "w_out": [..], "b_out": f64 }
//! }
//! ```
//!
//! Matrices are nested row-major arrays of f64. JSON prints floats in
//! shortest round-trip form, so save -> load reproduces every parameter
//! bit-for-bit and checkpoints diff cleanly as text.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::geometry::{ChartPoint, ImmersedManifold};

use super::mlp::{MlpArch, MlpParams};
use super::{DistanceField, FieldParams, FORMAT_VERSION, HEAD_NAME};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifoldMeta {
    name: String,
    scale: f64,
    domain: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchMeta {
    input_dim: usize,
    width: usize,
    depth: usize,
    activation: String,
    variant: super::MlpVariant,
    head: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    w_u: Vec<Vec<f64>>,
    b_u: Vec<f64>,
    w_v: Vec<Vec<f64>>,
    b_v: Vec<f64>,
    hidden: Vec<LayerDoc>,
    w_out: Vec<f64>,
    b_out: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    manifold: ManifoldMeta,
    origin: Vec<f64>,
    seed: u64,
    arch: ArchMeta,
    params: ParamsDoc,
}

fn mat_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(AtlasError::Format(format!("{what} rows have uneven length")));
    }
    let mut out = Array2::zeros((nrows, ncols));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

fn to_doc(field: &FieldParams) -> CheckpointDoc {
    let p = &field.mlp;
    CheckpointDoc {
        format_version: field.format_version,
        manifold: ManifoldMeta {
            name: field.manifold_name.clone(),
            scale: field.manifold_scale,
            domain: field.domain.iter().map(|&(lo, hi)| [lo, hi]).collect(),
        },
        origin: field.origin.coords.clone(),
        seed: field.seed,
        arch: ArchMeta {
            input_dim: p.arch.input_dim,
            width: p.arch.width,
            depth: p.arch.depth,
            activation: p.arch.activation.clone(),
            variant: p.arch.variant,
            head: HEAD_NAME.to_string(),
        },
        params: ParamsDoc {
            w_u: mat_to_rows(&p.w_u),
            b_u: p.b_u.to_vec(),
            w_v: mat_to_rows(&p.w_v),
            b_v: p.b_v.to_vec(),
            hidden: p
                .hidden
                .iter()
                .map(|(w, b)| LayerDoc {
                    w: mat_to_rows(w),
                    b: b.to_vec(),
                })
                .collect(),
            w_out: p.w_out.to_vec(),
            b_out: p.b_out,
        },
    }
}

fn from_doc(doc: CheckpointDoc) -> Result<FieldParams> {
    if doc.format_version != FORMAT_VERSION {
        return Err(AtlasError::Format(format!(
            "unsupported checkpoint format_version {} (this build reads {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    if doc.arch.head != HEAD_NAME {
        return Err(AtlasError::Format(format!(
            "unknown head '{}' (expected '{HEAD_NAME}')",
            doc.arch.head
        )));
    }
    if doc.arch.activation != "tanh" {
        return Err(AtlasError::Format(format!(
            "unknown activation '{}' (expected 'tanh')",
            doc.arch.activation
        )));
    }
    let arch = MlpArch {
        input_dim: doc.arch.input_dim,
        width: doc.arch.width,
        depth: doc.arch.depth,
        activation: doc.arch.activation,
        variant: doc.arch.variant,
    };
    let mlp = MlpParams {
        arch,
        w_u: rows_to_mat(&doc.params.w_u, "w_u")?,
        b_u: Array1::from_vec(doc.params.b_u),
        w_v: rows_to_mat(&doc.params.w_v, "w_v")?,
        b_v: Array1::from_vec(doc.params.b_v),
        hidden: doc
            .params
            .hidden
            .iter()
            .map(|l| Ok((rows_to_mat(&l.w, "hidden weight")?, Array1::from_vec(l.b.clone()))))
            .collect::<Result<Vec<_>>>()?,
        w_out: Array1::from_vec(doc.params.w_out),
        b_out: doc.params.b_out,
    };
    validate_shapes(&mlp)?;
    if !mlp.all_finite() {
        return Err(AtlasError::Format(
            "checkpoint contains non-finite parameters".into(),
        ));
    }
    let origin = ChartPoint::try_new(doc.origin)?;
    if origin.dim() != mlp.arch.input_dim {
        return Err(AtlasError::Format(format!(
            "origin has {} coordinates but the network input dimension is {}",
            origin.dim(),
            mlp.arch.input_dim
        )));
    }
    Ok(FieldParams {
        format_version: doc.format_version,
        manifold_name: doc.manifold.name,
        manifold_scale: doc.manifold.scale,
        domain: doc.manifold.domain.iter().map(|&[lo, hi]| (lo, hi)).collect(),
        origin,
        seed: doc.seed,
        mlp,
    })
}

fn validate_shapes(p: &MlpParams) -> Result<()> {
    let (d, w, depth) = (p.arch.input_dim, p.arch.width, p.arch.depth);
    let modified = matches!(p.arch.variant, super::MlpVariant::Modified);
    let enc_shape = if modified { (w, d) } else { (0, 0) };
    let enc_bias = if modified { w } else { 0 };
    let mut problems = Vec::new();
    if p.w_u.dim() != enc_shape || p.w_v.dim() != enc_shape {
        problems.push("encoder weight shape");
    }
    if p.b_u.len() != enc_bias || p.b_v.len() != enc_bias {
        problems.push("encoder bias shape");
    }
    if p.hidden.len() != depth {
        problems.push("hidden layer count");
    }
    for (l, (wm, bm)) in p.hidden.iter().enumerate() {
        let fan_in = if l == 0 { d } else { w };
        if wm.dim() != (w, fan_in) {
            problems.push("hidden weight shape");
        }
        if bm.len() != w {
            problems.push("hidden bias shape");
        }
    }
    if p.w_out.len() != w {
        problems.push("output weight shape");
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(AtlasError::Format(format!(
            "checkpoint parameters do not match declared architecture: {}",
            problems.join(", ")
        )))
    }
}

/// Write the field to `path` as a pretty-printed JSON document.
pub fn save_checkpoint(field: &DistanceField, path: &Path) -> Result<()> {
    let doc = to_doc(&field.params);
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| AtlasError::Format(format!("serialisation failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_doc(path: &Path) -> Result<CheckpointDoc> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| AtlasError::Format(format!("malformed checkpoint {}: {e}", path.display())))
}

/// Manifold identification stored in a checkpoint, for reconstructing the
/// manifold before loading: (name, scale, domain).
pub fn manifold_spec(path: &Path) -> Result<(String, f64, Vec<(f64, f64)>)> {
    let doc = read_doc(path)?;
    Ok((
        doc.manifold.name,
        doc.manifold.scale,
        doc.manifold.domain.iter().map(|&[lo, hi]| (lo, hi)).collect(),
    ))
}

/// Load a checkpoint and bind it to `m`, validating stored metadata —
/// dimensions, manifold name, and domain bounds — against the manifold.
pub fn load_checkpoint(path: &Path, m: &ImmersedManifold) -> Result<DistanceField> {
    let params = from_doc(read_doc(path)?)?;
    if params.mlp.arch.input_dim != m.intrinsic_dim() {
        return Err(AtlasError::Format(format!(
            "checkpoint was trained on a {}-dimensional chart but manifold '{}' is {}-dimensional",
            params.mlp.arch.input_dim,
            m.name(),
            m.intrinsic_dim()
        )));
    }
    if params.manifold_name != m.name() {
        return Err(AtlasError::Format(format!(
            "checkpoint was trained on manifold '{}', not '{}'",
            params.manifold_name,
            m.name()
        )));
    }
    if params.domain != m.domain() {
        return Err(AtlasError::Format(format!(
            "checkpoint domain {:?} does not match manifold domain {:?}",
            params.domain,
            m.domain()
        )));
    }
    DistanceField::new(params, m.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{peaks, plane};

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("atlas-ckpt-{}-{name}.json", std::process::id()));
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = peaks(0.7);
        let p = ChartPoint::of(&[0.4, -0.9]);
        let field =
            DistanceField::new(FieldParams::init(&m, &p, 5).unwrap(), m.clone()).unwrap();
        let path = tmp("roundtrip");
        save_checkpoint(&field, &path).unwrap();
        let loaded = load_checkpoint(&path, &m).unwrap();
        let a = field.params.mlp.flatten();
        let b = loaded.params.mlp.flatten();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // identical evaluations at a few points
        use crate::field::DistanceFn;
        for q in [[1.0, 1.0], [-2.0, 0.3], [0.0, 2.5]] {
            let q = ChartPoint::of(&q);
            assert_eq!(
                field.evaluate(&q).unwrap().phi.to_bits(),
                loaded.evaluate(&q).unwrap().phi.to_bits()
            );
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let m = plane();
        let p = ChartPoint::of(&[0.0, 0.0]);
        let field =
            DistanceField::new(FieldParams::init(&m, &p, 1).unwrap(), m.clone()).unwrap();
        let path = tmp("truncated");
        save_checkpoint(&field, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_checkpoint(&path, &m) {
            Err(AtlasError::Format(_)) => {}
            other => panic!("expected FormatError, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn dimension_mismatch_names_both_dims() {
        // a self-consistent 3-D checkpoint loaded against the 2-D plane
        let params = FieldParams {
            format_version: FORMAT_VERSION,
            manifold_name: "plane".into(),
            manifold_scale: 1.0,
            domain: vec![(-3.0, 3.0); 3],
            origin: ChartPoint::of(&[0.0, 0.0, 0.0]),
            seed: 1,
            mlp: MlpParams::init(MlpArch::modified(3, 8, 2), 1),
        };
        let path = tmp("dims");
        let mut text = serde_json::to_string_pretty(&to_doc(&params)).unwrap();
        text.push('\n');
        std::fs::write(&path, text).unwrap();
        match load_checkpoint(&path, &plane()) {
            Err(AtlasError::Format(msg)) => {
                assert!(msg.contains('3') && msg.contains('2'), "message: {msg}");
            }
            other => panic!("expected FormatError, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn wrong_manifold_is_rejected() {
        let m = peaks(1.0);
        let p = ChartPoint::of(&[0.0, 0.0]);
        let field =
            DistanceField::new(FieldParams::init(&m, &p, 1).unwrap(), m.clone()).unwrap();
        let path = tmp("wrong-manifold");
        save_checkpoint(&field, &path).unwrap();
        assert!(load_checkpoint(&path, &plane()).is_err());
        std::fs::remove_file(&path).ok();
    }
}
