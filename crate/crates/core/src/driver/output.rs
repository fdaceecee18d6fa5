use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::StepRecord;
use crate::error::Result;
use crate::mesh::{write_svg, write_vtu};

pub const CSV_HEADER: &str = "step,nelems,ndof_total,ndof_skeleton,error,eta,eta_cf,eta_nc,eta_jump,effectivity,seconds";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_convergence_csv(records: &[StepRecord], path: &Path) -> Result<()> {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{},{}",
            r.step,
            r.nelems,
            r.ndof_total,
            r.ndof_skeleton,
            opt(r.error),
            r.eta,
            r.eta_cf,
            r.eta_nc,
            r.eta_jump,
            opt(r.effectivity()),
            opt(r.seconds),
        )
        .ok();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_estimate_csv(rec: &StepRecord, path: &Path) -> Result<()> {
    let est = &rec.estimate;
    let mut s = String::from("element,eta_cf,eta_nc,jump,osc\n");
    for e in 0..est.eta_cf.len() {
        writeln!(s, "{e},{:e},{:e},{:e},{:e}", est.eta_cf[e], est.eta_nc[e], est.jump[e], est.osc[e]).ok();
    }
    fs::write(path, s)?;
    Ok(())
}

pub(super) fn write_step(dir: &Path, rec: &StepRecord, vtu: bool) -> Result<()> {
    let eta_k: Vec<f64> = rec.estimate.indicators().iter().map(|v| v.sqrt()).collect();
    let max = eta_k.iter().copied().fold(0.0, f64::max);
    let shade: Vec<f64> = eta_k.iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect();
    write_svg(&rec.mesh, Some(&shade), &dir.join(format!("mesh_{:03}.svg", rec.step)))?;
    write_estimate_csv(rec, &dir.join(format!("estimate_{:03}.csv", rec.step)))?;
    if vtu {
        let est = &rec.estimate;
        let data: [(&str, &[f64]); 5] = [
            ("eta", &eta_k),
            ("eta_cf", &est.eta_cf),
            ("eta_nc", &est.eta_nc),
            ("jump", &est.jump),
            ("a", rec.mesh.coefficients()),
        ];
        write_vtu(&rec.mesh, &data, &dir.join(format!("mesh_{:03}.vtu", rec.step)))?;
    }
    Ok(())
}

/// Log-log chart of the error and the estimator against total DOFs.
pub fn write_convergence_svg(records: &[StepRecord], path: &Path) -> Result<()> {
    let (w, h, pad) = (640.0, 480.0, 60.0);
    let mut series: Vec<(&str, &str, Vec<(f64, f64)>)> = vec![(
        "eta",
        "#c03030",
        records.iter().map(|r| (r.ndof_total as f64, r.eta)).collect(),
    )];
    if records.iter().all(|r| r.error.is_some()) {
        series.push((
            "error",
            "#3050c0",
            records.iter().map(|r| (r.ndof_total as f64, r.error.unwrap_or(1.0))).collect(),
        ));
    }
    let pts = series.iter().flat_map(|s| s.2.iter()).filter(|p| p.0 > 0.0 && p.1 > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| pad + (x.log10() - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y.log10() - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#).ok();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).ok();
    writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    )
    .ok();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">total DOFs</text>"#, w / 2.0, h - 15.0).ok();
    writeln!(
        s,
        r#"<text x="{pad}" y="{}" font-size="11">{:.1e}</text><text x="{}" y="{}" font-size="11" text-anchor="end">{:.1e}</text>"#,
        h - pad + 15.0,
        10f64.powf(x0),
        w - pad,
        h - pad + 15.0,
        10f64.powf(x1)
    )
    .ok();
    writeln!(
        s,
        r#"<text x="5" y="{}" font-size="11">{:.1e}</text><text x="5" y="{}" font-size="11">{:.1e}</text>"#,
        h - pad,
        10f64.powf(y0),
        pad + 10.0,
        10f64.powf(y1)
    )
    .ok();
    for (i, (name, color, data)) in series.iter().enumerate() {
        let pts: Vec<String> = data
            .iter()
            .filter(|p| p.0 > 0.0 && p.1 > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        )
        .ok();
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            w - pad - 60.0,
            pad + 20.0 + 18.0 * i as f64
        )
        .ok();
    }
    s.push_str("</svg>\n");
    fs::write(path, s)?;
    Ok(())
}
