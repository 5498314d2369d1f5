use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};
use volsamp::montecarlo::VerificationReport;
use volsamp::suite::{self, Caps};
use volsamp::{instances, regression, sampler, Error, IndexSubset, McConfig, ProblemMatrix, RegressionProblem, RngSeed};

use crate::error::CliError;
use crate::input::MatrixFile;
use crate::report::{InputDigest, RunReport};
use crate::Suite;

/// Labels count as realizable when `L(w*) <= REALIZABLE_RTOL * max(1, ‖y‖²)`.
pub const REALIZABLE_RTOL: f64 = 1e-20;

fn load_matrix(path: &Path) -> Result<(MatrixFile, ProblemMatrix), CliError> {
    let file = MatrixFile::read(path)?;
    let x = ProblemMatrix::new(file.matrix())?;
    Ok((file, x))
}

fn check_size(x: &ProblemMatrix, size: usize) -> Result<(), CliError> {
    if size < x.d() || size > x.n() {
        return Err(Error::SizeOutOfRange {
            size,
            min: x.d(),
            max: x.n(),
        }
        .into());
    }
    Ok(())
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn sample(input: &Path, size: usize, seed: u64, count: usize) -> Result<(RunReport, bool), CliError> {
    let (file, x) = load_matrix(input)?;
    check_size(&x, size)?;
    let master = RngSeed(seed);
    let mut samples = Vec::with_capacity(count);
    let mut per_sample_ms = Vec::with_capacity(count);
    for j in 0..count {
        let start = Instant::now();
        let s = sampler::reverse_iterative_sample(&x, size, master.derive(j as u64))?;
        per_sample_ms.push(elapsed_ms(start));
        samples.push(s.to_one_based());
    }
    let report = RunReport::new(
        "sample",
        json!({ "size": size, "count": count }),
        vec![InputDigest::of("input", &file)],
        seed,
        json!({ "per_sample_ms": per_sample_ms }),
        json!({ "d": x.d(), "n": x.n(), "size": size, "samples": samples }),
    );
    Ok((report, true))
}

pub fn regress(
    input: &Path,
    labels: &Path,
    size: Option<usize>,
    repeats: usize,
    seed: u64,
) -> Result<(RunReport, bool), CliError> {
    let (file, x) = load_matrix(input)?;
    let label_file = MatrixFile::read(labels)?;
    let y = label_file.labels()?;
    let size = size.unwrap_or(x.d());
    check_size(&x, size)?;
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let problem = RegressionProblem::new(x, y)?;
    let x = problem.x();

    let start = Instant::now();
    let master = RngSeed(seed);
    let subsets = (0..repeats)
        .map(|j| sampler::reverse_iterative_sample(x, size, master.derive(j as u64)))
        .collect::<Result<Vec<IndexSubset>, _>>()?;
    let per_sample = subsets
        .iter()
        .map(|s| {
            let sol = regression::solve_subset(&problem, s)?;
            Ok(json!({ "subset": s.to_one_based(), "w": sol.w.as_slice(), "loss": sol.loss }))
        })
        .collect::<Result<Vec<Value>, Error>>()?;
    let averaged = regression::averaged_solution(&problem, &subsets)?;
    let optimum = regression::solve_full(&problem);
    let wall = elapsed_ms(start);

    let realizable = optimum.loss <= REALIZABLE_RTOL * problem.y().norm_squared().max(1.0);
    let ratio = if realizable { 1.0 } else { averaged.loss / optimum.loss };
    let report = RunReport::new(
        "regress",
        json!({ "size": size, "repeats": repeats }),
        vec![InputDigest::of("input", &file), InputDigest::of("labels", &label_file)],
        seed,
        json!({ "total_ms": wall }),
        json!({
            "d": x.d(),
            "n": x.n(),
            "size": size,
            "samples": per_sample,
            "averaged": { "w": averaged.w.as_slice(), "loss": averaged.loss, "support": averaged.support.to_one_based() },
            "optimum": { "w": optimum.w.as_slice(), "loss": optimum.loss },
            "loss_ratio": ratio,
            "realizable": realizable,
        }),
    );
    Ok((report, true))
}

pub struct VerifyArgs<'a> {
    pub input: &'a Path,
    pub labels: Option<&'a Path>,
    pub suite: Suite,
    pub size: Option<usize>,
    pub seed: u64,
    pub replicates: usize,
    pub repeats: usize,
    pub caps: Caps,
}

pub fn verify(args: VerifyArgs<'_>) -> Result<(RunReport, bool), CliError> {
    let (file, x) = load_matrix(args.input)?;
    let mut inputs = vec![InputDigest::of("input", &file)];
    let y = match args.labels {
        Some(path) => {
            let f = MatrixFile::read(path)?;
            let y = f.labels()?;
            inputs.push(InputDigest::of("labels", &f));
            Some(y)
        }
        None => None,
    };
    let size = args.size.unwrap_or(x.d());
    check_size(&x, size)?;

    let start = Instant::now();
    let reports: Vec<VerificationReport> = match args.suite {
        Suite::Exact => suite::exact_suite(&x, y.as_ref(), size, args.caps)?,
        Suite::Mc => {
            if args.repeats == 0 {
                return Err(CliError::Usage("--repeats must be at least 1".into()));
            }
            let cfg = McConfig::new(args.replicates, RngSeed(args.seed));
            suite::mc_suite(&x, y.as_ref(), size, args.repeats, &cfg)?
        }
    };
    let wall = elapsed_ms(start);
    let all_passed = reports.iter().all(|r| r.passed);
    for r in &reports {
        eprintln!(
            "{} {:<28} deviation {:.3e} tolerance {:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.check,
            r.max_abs_deviation,
            r.tolerance
        );
    }
    let suite_name = match args.suite {
        Suite::Exact => "exact",
        Suite::Mc => "mc",
    };
    let report = RunReport::new(
        "verify",
        json!({
            "suite": suite_name,
            "size": size,
            "replicates": args.replicates,
            "repeats": args.repeats,
            "cap": args.caps.subsets.to_string(),
            "tuple_cap": args.caps.tuples.to_string(),
        }),
        inputs,
        args.seed,
        json!({ "total_ms": wall }),
        json!({ "all_passed": all_passed, "reports": reports }),
    );
    Ok((report, all_passed))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

pub fn bench(configs: &[(usize, usize, usize)], seed: u64, trials: usize) -> Result<(RunReport, bool), CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    for &(d, n, s) in configs {
        if d == 0 || n < d || s < d || s > n {
            return Err(Error::SizeOutOfRange { size: s, min: d, max: n }.into());
        }
    }
    let master = RngSeed(seed);
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut medians = Vec::new();
    for (c, &(d, n, s)) in configs.iter().enumerate() {
        let x = instances::gaussian_matrix(d, n, master.derive(c as u64));
        let mut times = Vec::with_capacity(trials);
        let mut sizes = Vec::with_capacity(trials);
        for t in 0..trials {
            let trial_seed = master.derive(c as u64).derive(t as u64);
            let start = Instant::now();
            let subset = sampler::reverse_iterative_sample(&x, s, trial_seed)?;
            times.push(elapsed_ms(start));
            sizes.push(subset.len());
        }
        let med = median(&mut times.clone());
        medians.push(med);
        rows.push(json!({ "d": d, "n": n, "s": s, "median_ms": med, "trial_ms": times }));
        results.push(json!({ "d": d, "n": n, "s": s, "trials": trials, "sample_sizes": sizes }));
    }

    // slope of time vs n for each d at s = d
    let mut fits = Vec::new();
    let mut ds: Vec<usize> = configs.iter().filter(|c| c.2 == c.0).map(|c| c.0).collect();
    ds.sort_unstable();
    ds.dedup();
    for d in ds {
        let points: Vec<(f64, f64)> = configs
            .iter()
            .zip(&medians)
            .filter(|(c, _)| c.0 == d && c.2 == d)
            .map(|(c, &t)| (c.1 as f64, t.max(1e-9)))
            .collect();
        let distinct_n = {
            let mut ns: Vec<u64> = points.iter().map(|p| p.0 as u64).collect();
            ns.sort_unstable();
            ns.dedup();
            ns.len()
        };
        if distinct_n >= 2 {
            fits.push(json!({ "d": d, "s": d, "points": points.len(), "slope": log_log_slope(&points) }));
        }
    }

    let report = RunReport::new(
        "bench",
        json!({ "configs": configs, "trials": trials }),
        Vec::new(),
        seed,
        json!({ "rows": rows, "fitted_exponents": fits }),
        json!({ "configs": results }),
    );
    Ok((report, true))
}
