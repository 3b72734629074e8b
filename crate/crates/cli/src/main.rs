mod reproduce;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use secretary_regret::analytic::{bopc_regret, relaxed_regret_rq, relaxed_regret_rtilde, LowerBoundInstance};
use secretary_regret::certifier::{
    certify_sup_below_with_progress, multistart_bopc_lowerbound, optimize_bopc_lowerbound, optimize_rtilde2, CertificateStatus,
    CertifyOptions, DEFAULT_BOX_BUDGET, DEFAULT_MAX_DEPTH,
};
use secretary_regret::dp_lower::{backward_dp, mixture_regret, MixtureInstance};
use secretary_regret::extensions::kselect::{
    estimate_kselect_mixture_regret, estimate_kselect_regret, kselect_policy, KSelectHardMixture, KSelectInstance,
};
use secretary_regret::extensions::revenue::{
    estimate_hard_distribution_mean, estimate_revenue_regret, hard_distribution_fixed_price_revenue, randomized_uniform_price,
    RevenueInstance,
};
use secretary_regret::model::InstanceFile;
use secretary_regret::montecarlo::{estimate_outcome, SimConfig, SimMethod};
use secretary_regret::{Instance, PolicySpec, ThresholdCurve};

use reproduce::{reproduce_all, Scale};

#[derive(Parser, Debug)]
#[command(name = "secretary", version, about = "Regret of secretary-problem policies: exact, certified and simulated")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    /// Also write the table as CSV.
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Include wall-clock runtimes in the output.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo regret of a policy on an instance.
    Simulate {
        /// Policy JSON (file path or inline).
        #[arg(long)]
        policy: String,
        /// Instance JSON (file path or inline).
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "1e6", value_parser = parse_count)]
        samples: u64,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
    },
    /// Closed-form regret of best-only with an exponential curve, plus relaxations.
    RegretExact {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 0.472)]
        c: f64,
        /// Also report R_q.
        #[arg(long)]
        q: Option<usize>,
        /// Also report the tail-equalised relaxation on the first q values.
        #[arg(long)]
        rtilde: bool,
    },
    /// Branch-and-bound certificate that sup R~5 stays below a target.
    Certify {
        #[arg(long, default_value_t = 0.472)]
        c: f64,
        #[arg(long, default_value_t = 0.190)]
        target: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: u32,
        #[arg(long, default_value_t = DEFAULT_BOX_BUDGET, value_parser = parse_count)]
        budget: u64,
    },
    /// Optimal DP policy and its regret on a mixture instance.
    DpBound {
        /// Mixture JSON (file path or inline); default is the built-in hard mixture.
        #[arg(long)]
        mixture: Option<String>,
        /// Override M.
        #[arg(long, value_parser = parse_count)]
        m: Option<u64>,
    },
    /// Optimal thresholds for the four-instance lower bound.
    BopcLower {
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.61)]
        b: f64,
        #[arg(long = "c-value", default_value_t = 0.48)]
        c: f64,
        #[arg(long, default_value_t = 0.44)]
        d: f64,
        /// Extra random restarts of the local search.
        #[arg(long, default_value_t = 0)]
        multistart: usize,
    },
    /// Maximize R~2 for the exponential curve.
    Rtilde2 {
        #[arg(long, default_value_t = 0.611)]
        c: f64,
    },
    /// Recursive-halving k-select policy on the hard mixture or a given instance.
    Kselect {
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long, default_value = "1e5", value_parser = parse_count)]
        trials: u64,
        /// Instance JSON (file path or inline); default is the hard mixture.
        #[arg(long)]
        instance: Option<String>,
    },
    /// Randomized uniform posted price.
    Revenue {
        #[arg(long, conflicts_with = "hard_dist", required_unless_present = "hard_dist")]
        instance: Option<String>,
        /// Sample from the hard value distribution instead.
        #[arg(long)]
        hard_dist: bool,
        #[arg(long, default_value = "1e7", value_parser = parse_count)]
        samples: u64,
    },
    /// Recompute every published bound and compare.
    ReproduceAll {
        /// Reduced sample counts for a fast smoke run.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Auto,
    Direct,
    Compressed,
}

impl From<Method> for SimMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Auto => SimMethod::Auto,
            Method::Direct => SimMethod::Direct,
            Method::Compressed => SimMethod::Compressed,
        }
    }
}

/// Accepts integers and float notation such as `1e7`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if f.fract() != 0.0 || !(0.0..=u64::MAX as f64).contains(&f) {
        return Err(format!("not a non-negative integer: {s}"));
    }
    Ok(f as u64)
}

/// Inline JSON if the argument looks like JSON, otherwise a file path.
fn read_json(arg: &str) -> anyhow::Result<String> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        return Ok(arg.to_string());
    }
    fs::read_to_string(Path::new(arg)).with_context(|| format!("reading {arg}"))
}

fn read_instance(arg: &str) -> anyhow::Result<Instance> {
    let text = read_json(arg)?;
    let inst = match serde_json::from_str::<Vec<f64>>(&text) {
        Ok(values) => Instance::new(values)?,
        Err(_) => serde_json::from_str::<InstanceFile>(&text).context("parsing instance")?.into_instance()?,
    };
    Ok(inst)
}

struct Report {
    headers: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    json: Value,
    ok: bool,
}

impl Report {
    fn new(headers: Vec<&'static str>, json: Value) -> Self {
        Self { headers, rows: Vec::new(), json, ok: true }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn kv(json: Value, pairs: Vec<(&str, String)>) -> Self {
        let mut r = Self::new(vec!["quantity", "value"], json);
        for (k, v) in pairs {
            r.row(vec![k.to_string(), v]);
        }
        r
    }

    fn print_table(&self, out: &mut impl Write) -> std::io::Result<()> {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
        };
        writeln!(out, "{}", line(self.headers.clone()))?;
        writeln!(
            out,
            "{}",
            line(
                widths.iter().map(|w| &"------------------------------------------------------------"[..(*w).min(60)]).collect()
            )
        )?;
        for row in &self.rows {
            writeln!(out, "{}", line(row.iter().map(String::as_str).collect()))?;
        }
        Ok(())
    }

    fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Integers print bare, tiny magnitudes in scientific notation.
fn num(x: f64) -> String {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e12 {
        format!("{}", x as i64)
    } else if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        f6(x)
    }
}

fn run(cli: Cli) -> anyhow::Result<Report> {
    let g = &cli.global;
    let started = Instant::now();
    let mut report = match cli.command {
        Command::Simulate { policy, instance, samples, confidence, method } => {
            let spec = PolicySpec::from_json(&read_json(&policy)?).context("parsing policy")?;
            let policy = spec.build()?;
            let inst = read_instance(&instance)?;
            let cfg = SimConfig { samples, seed: g.seed, confidence, method: method.into() };
            let out = estimate_outcome(policy.as_ref(), &inst, &cfg)?;
            Report::kv(
                json!({ "policy": spec, "n": inst.len(), "outcome": out }),
                vec![
                    ("policy", policy.name()),
                    ("n", inst.len().to_string()),
                    ("samples", samples.to_string()),
                    ("regret", f6(out.regret.value)),
                    ("ci halfwidth", format!("{:.2e}", out.regret.ci_halfwidth)),
                    ("P[accept best]", f6(out.p_best)),
                    ("P[accept none]", f6(out.p_none)),
                ],
            )
        }
        Command::RegretExact { instance, c, q, rtilde } => {
            let curve = ThresholdCurve::exponential(c)?;
            let inst = read_instance(&instance)?;
            let exact = bopc_regret(&curve, &inst)?.value;
            let mut pairs = vec![("curve", format!("exp(-t/{c})")), ("n", inst.len().to_string()), ("regret", f6(exact))];
            let mut j = json!({ "c": c, "n": inst.len(), "regret": exact });
            if let Some(q) = q {
                let rq = relaxed_regret_rq(&curve, &inst, q)?;
                pairs.push(("R_q", f6(rq)));
                j["r_q"] = json!(rq);
                if rtilde {
                    let rt = relaxed_regret_rtilde(&curve, &inst.values()[..q], q)?;
                    pairs.push(("R~_q", f6(rt)));
                    j["rtilde_q"] = json!(rt);
                }
            } else if rtilde {
                bail!("--rtilde needs --q");
            }
            Report::kv(j, pairs)
        }
        Command::Certify { c, target, max_depth, budget } => {
            let curve = ThresholdCurve::exponential(c)?;
            let opts = CertifyOptions { max_depth, box_budget: budget };
            let cert = certify_sup_below_with_progress(&curve, target, opts, |p| {
                eprintln!(
                    "depth {:>2}  boxes closed {:>14}  open {:>8}  max corner {:.6}",
                    p.depth, p.boxes_processed, p.open_boxes, p.max_corner_value
                );
            })?;
            let mut r = Report::kv(
                serde_json::to_value(&cert)?,
                vec![
                    ("target", format!("{target}")),
                    ("status", format!("{:?}", cert.status)),
                    ("boxes processed", cert.boxes_processed.to_string()),
                    ("max depth", cert.max_depth_reached.to_string()),
                    ("max corner value", f6(cert.max_corner_value)),
                    ("max corner", format!("{:?}", cert.max_corner.map(|x| (x * 1e6).round() / 1e6))),
                ],
            );
            r.ok = cert.status == CertificateStatus::Certified;
            r
        }
        Command::DpBound { mixture, m } => {
            let mut mix = match mixture {
                Some(arg) => MixtureInstance::from_json(&read_json(&arg)?)?,
                None => MixtureInstance::hard_example(100_000),
            };
            if let Some(m) = m {
                mix.m = usize::try_from(m)?;
            }
            mix.validate()?;
            let tables = backward_dp(&mix)?;
            let regret = mixture_regret(&mix, &tables)?.value;
            let mut r = Report::new(vec!["seen", "value", "threshold", "monotone"], Value::Null);
            let mut rules = Vec::new();
            for s in 0u32..(1 << mix.support.len()) {
                for (v, &x) in mix.support.iter().enumerate() {
                    if s & (1 << v) != 0 {
                        continue;
                    }
                    let Some(rule) = tables.rule(s, v) else { continue };
                    let seen: Vec<f64> = (0..mix.support.len()).filter(|i| s & (1 << i) != 0).map(|i| mix.support[i]).collect();
                    let th = rule.threshold();
                    r.row(vec![
                        format!("{seen:?}"),
                        format!("{x}"),
                        th.map_or("-".into(), |t| t.to_string()),
                        rule.is_monotone().to_string(),
                    ]);
                    rules.push(json!({ "seen": seen, "value": x, "threshold": th, "monotone": rule.is_monotone() }));
                }
            }
            r.row(vec!["regret".into(), String::new(), f6(regret), String::new()]);
            r.json = json!({ "m": mix.m, "regret": regret, "rules": rules });
            r
        }
        Command::BopcLower { a, b, c, d, multistart } => {
            let inst = LowerBoundInstance { a, b, c, d };
            let mut best = optimize_bopc_lowerbound(&inst)?;
            if multistart > 0 {
                for o in multistart_bopc_lowerbound(&inst, multistart, g.seed) {
                    if o.worst_regret < best.worst_regret {
                        best = o;
                    }
                }
            }
            Report::kv(
                serde_json::to_value(best)?,
                vec![
                    ("theta", format!("{:?}", best.thetas.map(|t| (t * 1e5).round() / 1e5))),
                    ("regrets", format!("{:?}", best.regrets.map(|t| (t * 1e6).round() / 1e6))),
                    ("worst regret", f6(best.worst_regret)),
                ],
            )
        }
        Command::Rtilde2 { c } => {
            let opt = optimize_rtilde2(c)?;
            let case = |o: Option<secretary_regret::certifier::CaseOptimum>| {
                o.map_or("-".into(), |o| format!("x1={:.6} x2={:.6} value={:.6}", o.x1, o.x2, o.value))
            };
            Report::kv(
                serde_json::to_value(opt)?,
                vec![("c", format!("{c}")), ("case 1", case(opt.case1)), ("case 2", case(opt.case2)), ("max", f6(opt.value))],
            )
        }
        Command::Kselect { k, trials, instance } => {
            let policy = kselect_policy(k)?;
            let cfg = SimConfig::new(trials, g.seed);
            let (label, r) = match instance {
                Some(arg) => {
                    let values = read_instance(&arg)?.values().to_vec();
                    ("instance", estimate_kselect_regret(&policy, &KSelectInstance::new(values, k)?, &cfg)?)
                }
                None => ("hard mixture", estimate_kselect_mixture_regret(&policy, &KSelectHardMixture::rounded(k)?, &cfg)?),
            };
            let ratio = r.value / (k as f64).sqrt();
            Report::kv(
                json!({ "k": k, "target": label, "regret": r, "regret_over_sqrt_k": ratio }),
                vec![
                    ("k", k.to_string()),
                    ("target", label.into()),
                    ("regret", f6(r.value)),
                    ("ci halfwidth", format!("{:.2e}", r.ci_halfwidth)),
                    ("regret/sqrt(k)", f6(ratio)),
                ],
            )
        }
        Command::Revenue { instance, hard_dist, samples } => {
            let cfg = SimConfig::new(samples, g.seed);
            if hard_dist {
                let mean = estimate_hard_distribution_mean(&cfg)?;
                let spread = (0..=1000)
                    .map(|i| 1.0 / std::f64::consts::E + (1.0 - 1.0 / std::f64::consts::E) * i as f64 / 1000.0)
                    .map(|p| (hard_distribution_fixed_price_revenue(p) - 1.0 / std::f64::consts::E).abs())
                    .fold(0.0, f64::max);
                Report::kv(
                    json!({ "mean": mean, "two_over_e": 2.0 / std::f64::consts::E, "fixed_price_spread": spread }),
                    vec![
                        ("sample mean", f6(mean.value)),
                        ("ci halfwidth", format!("{:.2e}", mean.ci_halfwidth)),
                        ("2/e", f6(2.0 / std::f64::consts::E)),
                        ("max |fixed-price revenue - 1/e|", format!("{spread:.2e}")),
                    ],
                )
            } else {
                let arg = instance.expect("clap enforces --instance or --hard-dist");
                let inst = RevenueInstance::new(read_instance(&arg)?.values().to_vec())?;
                let policy = randomized_uniform_price();
                let exact = policy.exact_regret(&inst).value;
                let mc = estimate_revenue_regret(&policy, &inst, &cfg)?;
                Report::kv(
                    json!({ "exact_regret": exact, "simulated": mc }),
                    vec![
                        ("exact regret", f6(exact)),
                        ("simulated regret", f6(mc.value)),
                        ("ci halfwidth", format!("{:.2e}", mc.ci_halfwidth)),
                    ],
                )
            }
        }
        Command::ReproduceAll { quick } => {
            let scale = if quick { Scale::quick() } else { Scale::full() };
            let rows = reproduce_all(scale, g.seed, g.timings, |msg| eprintln!("{msg}"));
            let mut headers = vec!["claim", "quantity", "expected", "computed", "tolerance", "direction", "pass"];
            if g.timings {
                headers.push("runtime_s");
            }
            headers.push("detail");
            let mut r = Report::new(headers, serde_json::to_value(&rows)?);
            for row in &rows {
                let mut cells = vec![
                    row.claim.clone(),
                    row.quantity.clone(),
                    num(row.expected),
                    num(row.computed),
                    num(row.tolerance),
                    serde_json::to_value(row.direction)?.as_str().unwrap_or_default().to_string(),
                    if row.pass { "PASS" } else { "FAIL" }.into(),
                ];
                if let Some(t) = row.runtime_s {
                    cells.push(format!("{t:.2}"));
                }
                cells.push(row.detail.clone());
                r.row(cells);
            }
            r.ok = rows.iter().all(|row| row.pass);
            r
        }
    };
    if g.timings {
        let secs = started.elapsed().as_secs_f64();
        if let Value::Object(map) = &mut report.json {
            map.insert("runtime_s".into(), json!(secs));
        }
        eprintln!("runtime {secs:.2}s");
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let json_out = cli.global.json;
    let csv_path = cli.global.csv.clone();
    let report = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let written = if json_out {
        serde_json::to_string_pretty(&report.json).map_err(anyhow::Error::from).and_then(|s| Ok(writeln!(out, "{s}")?))
    } else {
        report.print_table(&mut out).map_err(anyhow::Error::from)
    };
    if let Err(e) = written.and_then(|_| csv_path.map_or(Ok(()), |p| report.write_csv(&p))) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_float_notation() {
        assert_eq!(parse_count("1e7"), Ok(10_000_000));
        assert_eq!(parse_count("250"), Ok(250));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert!(parse_count("many").is_err());
    }

    #[test]
    fn number_cells() {
        assert_eq!(num(29396.0), "29396");
        assert_eq!(num(1e-12), "1.000e-12");
        assert_eq!(num(0.25), "0.250000");
    }
}
