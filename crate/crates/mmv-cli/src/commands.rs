//! Subcommand implementations. Each returns the process exit code on the
//! success path and a typed [`CliError`] otherwise.

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use mmv_core::densities::logpdf_draw;
use mmv_core::estimation::{fit_beta2, Beta2Model, FitConfig, SeedStrategy};
use mmv_core::samplers::sample_family;
use mmv_core::transforms::{
    beta1_to_beta2, beta2_to_beta1, decompose_blocks, invert_spd, r_to_t, t_to_r, CompanionFamily,
    Companions,
};
use mmv_core::verify::{assert_registry_complete, default_suite, CheckReport};
use mmv_core::{Draw, ExtendedShape, Family, KernelSpec, MatrixBlock, RngStream, SpdMatrix};

use crate::formats::{
    draw_to_line, matrix_to_nested, parse_draw_lines, MatrixCollection, MatrixItem,
};
use crate::CliError;

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, content)
                .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

/// "m,n0,n1,..." into (m, row counts).
fn parse_shape_flag(shape: &str) -> Result<(usize, Vec<usize>), CliError> {
    let parts: Vec<usize> = shape
        .split(',')
        .map(|p| {
            p.trim().parse::<usize>().map_err(|_| {
                CliError::usage(format!("shape entry `{p}` is not a positive integer"))
            })
        })
        .collect::<Result<_, _>>()?;
    if parts.len() < 2 {
        return Err(CliError::usage(
            "shape flag needs at least `m,n0` (matrix dimension, then block rows)",
        ));
    }
    if parts.contains(&0) {
        return Err(CliError::usage("shape entries must be positive"));
    }
    Ok((parts[0], parts[1..].to_vec()))
}

fn family_has_anchor(family: Family) -> bool {
    !matches!(
        family,
        Family::GenWishart
            | Family::Inverted {
                kind: mmv_core::InvertedKind::GwInvWishart,
                ..
            }
    )
}

/// Builds the shape from the flag pair: integer rows, optionally overridden
/// by real parameters "a0=..,a=.." (the counts still come from --shape).
fn build_shape(
    family: Family,
    shape_flag: &str,
    params: Option<&str>,
) -> Result<ExtendedShape, CliError> {
    let (m, rows) = parse_shape_flag(shape_flag)?;
    let anchored = family_has_anchor(family);
    match params {
        None => ExtendedShape::from_block_rows(m, &rows, anchored)
            .map_err(|e| CliError::usage(e.to_string())),
        Some(p) => {
            let mut a0 = None;
            let mut a = None;
            for part in p.split(',') {
                let (key, value) = part.split_once('=').ok_or_else(|| {
                    CliError::usage(format!("parameter `{part}` is not key=value"))
                })?;
                let value: f64 = value.trim().parse().map_err(|_| {
                    CliError::usage(format!("parameter `{part}` has a non-numeric value"))
                })?;
                match key.trim() {
                    "a0" => a0 = Some(value),
                    "a" => a = Some(value),
                    other => {
                        return Err(CliError::usage(format!(
                            "unknown parameter `{other}` (expected a0 or a)"
                        )))
                    }
                }
            }
            let a = a.ok_or_else(|| CliError::usage("params need `a=..`"))?;
            if anchored {
                let a0 =
                    a0.ok_or_else(|| CliError::usage("this family needs `a0=..` in params"))?;
                let k = rows.len() - 1;
                ExtendedShape::with_anchor(m, a0, vec![a; k])
                    .map_err(|e| CliError::usage(e.to_string()))
            } else {
                if a0.is_some() {
                    return Err(CliError::usage(
                        "this family has no anchor parameter; drop `a0=`",
                    ));
                }
                ExtendedShape::without_anchor(m, vec![a; rows.len()])
                    .map_err(|e| CliError::usage(e.to_string()))
            }
        }
    }
}

pub fn fit(
    input: &Path,
    model: &str,
    seed_a0: Option<f64>,
    seed_a: Option<f64>,
    restarts: usize,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let model = Beta2Model::parse(model).map_err(|e| CliError::usage(e.to_string()))?;
    let text = read_input(input)?;
    let coll = MatrixCollection::parse(&text)?;
    let data = coll.spd_items()?;
    if data.is_empty() {
        return Err(CliError::data("fit needs at least one observation"));
    }
    let mut config = FitConfig::new(model);
    config.restarts = restarts.max(1);
    config.seed_strategy = match (seed_a0, seed_a) {
        (Some(a0), Some(a)) => SeedStrategy::Explicit { a0, a },
        (None, None) => SeedStrategy::Univariate,
        _ => {
            return Err(CliError::usage(
                "provide both --seed-a0 and --seed-a, or neither",
            ))
        }
    };
    let fit = fit_beta2(&data, &config).map_err(|e| CliError::numeric(e.to_string()))?;
    let json = serde_json::json!({
        "model": model.name(),
        "a0": fit.a0_hat,
        "a": fit.a_hat,
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "seed_used": [fit.seed_used.0, fit.seed_used.1],
        "seed_fallback": fit.seed_fallback,
    });
    write_output(
        out,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&json).expect("serializable")
        ),
    )?;
    Ok(if fit.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

pub fn sample(
    family: &str,
    shape_flag: &str,
    kernel_name: &str,
    n: usize,
    seed: u64,
    split: usize,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let family =
        Family::parse_with_split(family, split).map_err(|e| CliError::usage(e.to_string()))?;
    let shape = build_shape(family, shape_flag, None)?;
    let kernel = KernelSpec::parse(kernel_name, shape.kernel_dim())
        .map_err(|e| CliError::usage(e.to_string()))?;
    let draws = sample_family(family, &shape, &kernel, n, RngStream::new(seed, 0))
        .map_err(|e| CliError::numeric(e.to_string()))?;
    let mut buf = String::new();
    for d in &draws {
        buf.push_str(&draw_to_line(&d.items));
        buf.push('\n');
    }
    write_output(out, &buf)?;
    Ok(ExitCode::SUCCESS)
}

pub fn pdf(
    input: &Path,
    family: &str,
    shape_flag: &str,
    params: Option<&str>,
    kernel_name: Option<&str>,
    split: usize,
) -> Result<ExitCode, CliError> {
    let family =
        Family::parse_with_split(family, split).map_err(|e| CliError::usage(e.to_string()))?;
    let kernel_free = matches!(
        family,
        Family::Marginal(_)
            | Family::Inverted {
                kind: mmv_core::InvertedKind::Beta2Inv,
                ..
            }
    );
    if kernel_free && kernel_name.is_some() {
        return Err(CliError::usage(format!(
            "family `{}` is kernel-free; drop --kernel",
            family.name()
        )));
    }
    let shape = build_shape(family, shape_flag, params)?;
    let kernel = kernel_name
        .map(|k| KernelSpec::parse(k, shape.kernel_dim()))
        .transpose()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let text = read_input(input)?;

    // A collection file is one JSON object; a draws file is JSON lines.
    let draws: Vec<Draw> = match MatrixCollection::parse(&text) {
        Ok(coll) => {
            let tuple_len = expected_tuple_len(family, &shape);
            if tuple_len != 1 {
                return Err(CliError::data(format!(
                    "family `{}` evaluates tuples of {tuple_len} matrices; pass a JSON-lines draw file",
                    family.name()
                )));
            }
            match coll.kind.as_str() {
                "spd" => coll
                    .spd_items_lenient()?
                    .into_iter()
                    .zip(coll.items.iter())
                    .map(|(spd, raw)| Draw {
                        items: vec![match spd {
                            Some(s) => s.into_matrix(),
                            // keep the raw symmetric matrix; evaluation
                            // reports the boundary violation as -inf
                            None => crate::formats::nested_to_matrix(&raw.data).expect("validated"),
                        }],
                    })
                    .collect(),
                _ => coll
                    .block_items()?
                    .into_iter()
                    .map(|b| Draw {
                        items: vec![b.into_matrix()],
                    })
                    .collect(),
            }
        }
        Err(coll_err) => match parse_draw_lines(&text) {
            Ok(lines) => lines
                .iter()
                .map(|l| {
                    Ok(Draw {
                        items: l
                            .items
                            .iter()
                            .map(|m| crate::formats::nested_to_matrix(m))
                            .collect::<Result<_, _>>()?,
                    })
                })
                .collect::<Result<_, CliError>>()?,
            Err(_) => return Err(coll_err),
        },
    };

    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for (idx, d) in draws.iter().enumerate() {
        match logpdf_draw(family, d, &shape, None, kernel.as_ref()) {
            Ok(lp) if lp == f64::NEG_INFINITY => {
                eprintln!("warning: item {idx} violates a domain constraint; density is zero");
                writeln!(lock, "-inf")?;
            }
            Ok(lp) => writeln!(lock, "{lp:.16e}")?,
            Err(e) => return Err(CliError::data(format!("item {idx}: {e}"))),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn expected_tuple_len(family: Family, shape: &ExtendedShape) -> usize {
    match family {
        Family::GenWishart => shape.k(),
        Family::Joint(_) => shape.k() + 1,
        Family::Marginal(_) => shape.k(),
        Family::Trimatric(_) => 3,
        Family::Inverted { .. } => shape.k(),
    }
}

pub fn gram(
    input: &Path,
    anchor_index: Option<usize>,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let text = read_input(input)?;
    let coll = MatrixCollection::parse(&text)?;
    let blocks = coll.block_items()?;
    let spd: Vec<SpdMatrix> = match anchor_index {
        None => blocks
            .iter()
            .enumerate()
            .map(|(idx, b)| {
                b.gram_spd()
                    .map_err(|e| CliError::numeric(format!("item {idx}: {e}")))
            })
            .collect::<Result<_, _>>()?,
        Some(anchor) => {
            if anchor >= blocks.len() {
                return Err(CliError::data(format!(
                    "anchor index {anchor} out of range for {} items",
                    blocks.len()
                )));
            }
            let mut ordered: Vec<MatrixBlock> = Vec::with_capacity(blocks.len());
            ordered.push(blocks[anchor].clone());
            ordered.extend(
                blocks
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != anchor)
                    .map(|(_, b)| b.clone()),
            );
            let (_, comp) = decompose_blocks(&ordered, CompanionFamily::Beta2)
                .map_err(|e| CliError::numeric(e.to_string()))?;
            match comp {
                Companions::Beta2(fs) => fs,
                _ => unreachable!("beta2 decomposition returns beta2 companions"),
            }
        }
    };
    let out_coll = MatrixCollection::from_spd(&spd);
    write_output(out, &format!("{}\n", out_coll.to_json()))?;
    Ok(ExitCode::SUCCESS)
}

pub fn transform(input: &Path, name: &str, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let text = read_input(input)?;
    let coll = MatrixCollection::parse(&text)?;
    let (items, log_jac, kind): (Vec<MatrixItem>, Option<Vec<f64>>, &str) = match name {
        "t-to-r" | "r-to-t" => {
            let blocks = coll.block_items()?;
            let mut out_items = Vec::with_capacity(blocks.len());
            let mut jacs = Vec::with_capacity(blocks.len());
            for (idx, b) in blocks.iter().enumerate() {
                let (res, lj) = if name == "t-to-r" {
                    t_to_r(b)
                } else {
                    r_to_t(b)
                }
                .map_err(|e| CliError::numeric(format!("item {idx}: {e}")))?;
                jacs.push(lj);
                out_items.push(MatrixItem {
                    rows: res.rows(),
                    data: matrix_to_nested(res.as_matrix()),
                });
            }
            (out_items, Some(jacs), "block")
        }
        "beta1-to-beta2" | "beta2-to-beta1" | "invert-spd" => {
            let mats = coll.spd_items()?;
            let mut out_items = Vec::with_capacity(mats.len());
            let mut jacs = Vec::with_capacity(mats.len());
            for (idx, s) in mats.iter().enumerate() {
                let res = match name {
                    "beta1-to-beta2" => beta1_to_beta2(s).map(|r| (r, None)),
                    "beta2-to-beta1" => beta2_to_beta1(s).map(|r| (r, None)),
                    _ => invert_spd(s).map(|(r, lj)| (r, Some(lj))),
                }
                .map_err(|e| CliError::numeric(format!("item {idx}: {e}")))?;
                if let Some(lj) = res.1 {
                    jacs.push(lj);
                }
                out_items.push(MatrixItem {
                    rows: res.0.dim(),
                    data: matrix_to_nested(res.0.as_matrix()),
                });
            }
            let jacs = if jacs.is_empty() { None } else { Some(jacs) };
            (out_items, jacs, "spd")
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown transform `{other}` (expected t-to-r, r-to-t, beta1-to-beta2, beta2-to-beta1, invert-spd)"
            )))
        }
    };
    let m = items.first().map(|i| i.data[0].len()).unwrap_or(coll.m);
    let mut json = serde_json::json!({
        "m": m,
        "kind": kind,
        "items": items.iter().map(|i| serde_json::json!({"rows": i.rows, "data": i.data})).collect::<Vec<_>>(),
    });
    if let Some(jacs) = log_jac {
        json["log_jac"] = serde_json::json!(jacs);
    }
    write_output(
        out,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&json).expect("serializable")
        ),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn report_to_json(rep: &CheckReport) -> String {
    serde_json::to_string(&serde_json::json!({
        "name": rep.name,
        "statistic": rep.statistic,
        "target": rep.target,
        "tolerance": rep.tolerance,
        "passed": rep.passed,
        "detail": rep.detail,
    }))
    .expect("serializable")
}

pub fn verify(check: Option<&str>, all: bool, list: bool) -> Result<ExitCode, CliError> {
    assert_registry_complete().map_err(|e| CliError::numeric(e.to_string()))?;
    let suite = default_suite();
    if list {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        for c in &suite {
            writeln!(lock, "{}", c.name)?;
        }
        return Ok(ExitCode::SUCCESS);
    }
    let selected: Vec<_> = match (check, all) {
        (Some(name), false) => {
            let found: Vec<_> = suite.iter().filter(|c| c.name == name).collect();
            if found.is_empty() {
                return Err(CliError::usage(format!(
                    "unknown check `{name}`; run with --list to see the registry"
                )));
            }
            found
        }
        (None, true) => suite.iter().collect(),
        _ => {
            return Err(CliError::usage(
                "pass --check NAME or --all (or --list to enumerate)",
            ))
        }
    };
    use rayon::prelude::*;
    let reports: Vec<CheckReport> = selected.par_iter().map(|c| c.run()).collect();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut all_passed = true;
    for rep in &reports {
        writeln!(lock, "{}", report_to_json(rep))?;
        all_passed &= rep.passed;
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
