use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{HarnessError, TrialResult};
use crate::mesh::TriangleMesh;

pub fn cam_csv(values: &[f64]) -> String {
    let mut out = String::from("vertex_index,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

pub fn write_cam_csv(path: &Path, values: &[f64]) -> Result<(), HarnessError> {
    std::fs::write(path, cam_csv(values))?;
    Ok(())
}

/// ASCII PLY with a scalar `value` property per vertex.
pub fn write_cam_ply(path: &Path, mesh: &TriangleMesh, values: &[f64]) -> Result<(), HarnessError> {
    if values.len() != mesh.n_vertices() {
        return Err(HarnessError::Dataset(format!(
            "{} values for {} vertices",
            values.len(),
            mesh.n_vertices()
        )));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "ply\nformat ascii 1.0")?;
    writeln!(out, "element vertex {}", mesh.n_vertices())?;
    writeln!(out, "property double x\nproperty double y\nproperty double z\nproperty double value")?;
    writeln!(out, "element face {}", mesh.faces().len())?;
    writeln!(out, "property list uchar int vertex_indices\nend_header")?;
    for (p, v) in mesh.vertices().iter().zip(values) {
        writeln!(out, "{:?} {:?} {:?} {v:?}", p[0], p[1], p[2])?;
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per trial with the test metrics; missing values are empty.
pub fn write_trials_csv(path: &Path, trials: &[TrialResult]) -> Result<(), HarnessError> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(
        "trial,n_train,n_val,n_test,best_epoch,accuracy,sensitivity,specificity,auc,baseline_accuracy,cam_localized\n",
    );
    for t in trials {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            t.trial,
            t.n_train,
            t.n_val,
            t.n_test,
            t.best_epoch,
            t.test.accuracy,
            opt(t.test.sensitivity),
            opt(t.test.specificity),
            opt(t.test.auc),
            opt(t.baseline.as_ref().map(|b| b.accuracy)),
            t.cam.as_ref().map(|c| c.localized.to_string()).unwrap_or_default()
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}
