//! Probe-suite serialization into the binary array container.

use anyhow::{anyhow, Result};

use aerojepa::numerics::Tensor;
use aerojepa::probes::{ProbeEntry, ProbeFamily, ProbeModel, ProbeSuite, SuiteReport};

fn family_tag(f: ProbeFamily) -> &'static str {
    match f {
        ProbeFamily::ContextDesign => "ctx_design",
        ProbeFamily::PredictedCoeffs => "pred_coeffs",
        ProbeFamily::PredictedAlpha => "pred_alpha",
        ProbeFamily::ContextAlphaControl => "ctx_alpha",
    }
}

const FAMILIES: [ProbeFamily; 4] = [
    ProbeFamily::ContextDesign,
    ProbeFamily::PredictedCoeffs,
    ProbeFamily::PredictedAlpha,
    ProbeFamily::ContextAlphaControl,
];

pub fn suites_to_arrays(report: &SuiteReport) -> Vec<(String, Tensor<f64>)> {
    let mut out = Vec::new();
    for suite in report.suites() {
        let tag = family_tag(suite.family);
        for entry in &suite.probes {
            let prefix = format!("{tag}.{}", entry.target);
            out.push((format!("{prefix}.mu"), Tensor::row_vec(entry.model.mu.clone())));
            out.push((
                format!("{prefix}.sigma"),
                Tensor::row_vec(entry.model.sigma.clone()),
            ));
            out.push((format!("{prefix}.w"), Tensor::row_vec(entry.model.w.clone())));
            out.push((
                format!("{prefix}.scalars"),
                Tensor::row_vec(vec![
                    entry.model.b,
                    entry.model.lambda_selected,
                    entry.model.cv_r2,
                    entry.held_out_r2,
                    if entry.reliable { 1.0 } else { 0.0 },
                ]),
            ));
        }
    }
    out
}

pub fn suites_from_arrays(arrays: &[(String, Tensor<f64>)]) -> Result<SuiteReport> {
    let get = |name: &str| -> Result<&Tensor<f64>> {
        arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| anyhow!("probe file missing array {name}"))
    };
    let mut suites = Vec::new();
    for family in FAMILIES {
        let tag = family_tag(family);
        let mut probes = Vec::new();
        for (target, _) in family.targets() {
            let prefix = format!("{tag}.{target}");
            let scalars = get(&format!("{prefix}.scalars"))?;
            probes.push(ProbeEntry {
                target: target.to_string(),
                model: ProbeModel {
                    mu: get(&format!("{prefix}.mu"))?.data().to_vec(),
                    sigma: get(&format!("{prefix}.sigma"))?.data().to_vec(),
                    w: get(&format!("{prefix}.w"))?.data().to_vec(),
                    b: scalars.at(0, 0),
                    lambda_selected: scalars.at(0, 1),
                    cv_r2: scalars.at(0, 2),
                },
                held_out_r2: scalars.at(0, 3),
                reliable: scalars.at(0, 4) != 0.0,
            });
        }
        suites.push(ProbeSuite { family, probes });
    }
    let mut it = suites.into_iter();
    Ok(SuiteReport {
        context_design: it.next().unwrap(),
        predicted_coeffs: it.next().unwrap(),
        predicted_alpha: it.next().unwrap(),
        context_alpha_control: it.next().unwrap(),
    })
}
