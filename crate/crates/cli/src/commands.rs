use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use triage_core::framework::{
    default_grid, framework_sweep, savings_at_sensitivity, tradeoff_curve, FrameworkPoint,
};
use triage_core::stats::{
    delong_ci, delong_paired, BootstrapConfig, ConfidenceInterval, TestResult,
};
use triage_core::strata::{
    density_hist, gaussian_kde, silverman_bandwidth, subgroup_report, Covariate, DENSITY_GROUPS,
};
use triage_core::summary::cohort_summary;
use triage_core::synth::{self, BinormalSpec, PriorTbMixSpec};
use triage_core::thresholds::{
    human_vs_ai, tpp_check, write_human_comparison_csv, write_tpp_csv, HumanComparison, TppVerdict,
};
use triage_core::{
    parse_cohort, pr_curve, prauc, roc_curve, write_cohort, BinaryClassification, Cohort,
    IngestOptions,
};
use triage_dicom::{load_rules, run_batch, BatchOptions, ValidationMode};

use crate::output::{file_stem, print_json, write_atomic, Artifacts};
use crate::{AnonymizeArgs, CliError, CohortArgs, Command, GridArgs, SynthArgs, SCHEMA_VERSION};

type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Evaluate { cohort, grid } => evaluate(&cohort, &grid),
        Command::Roc { cohort } => roc(&cohort),
        Command::Prc { cohort } => prc(&cohort),
        Command::Compare { cohort } => compare(&cohort),
        Command::MatchHuman {
            cohort,
            classifications,
        } => {
            let cls: Vec<BinaryClassification> = if classifications.is_empty() {
                BinaryClassification::ALL.to_vec()
            } else {
                classifications.into_iter().map(Into::into).collect()
            };
            match_human(&cohort, &cls)
        }
        Command::Tpp { cohort } => tpp(&cohort),
        Command::Framework {
            cohort,
            grid,
            sens_floor,
        } => framework(&cohort, &grid, sens_floor),
        Command::Subgroups {
            cohort,
            covariates,
            seed,
            replicates,
            workers,
        } => {
            let covariates = if covariates.is_empty() {
                Covariate::ALL.to_vec()
            } else {
                covariates
            };
            let config = BootstrapConfig {
                replicates,
                level: cohort.level,
                seed,
                workers,
            };
            subgroups(&cohort, &covariates, &config)
        }
        Command::Density {
            cohort,
            bins,
            kde_points,
        } => density(&cohort, bins as usize, kde_points.map(|k| k as usize)),
        Command::Synth(args) => synthesize(&args),
        Command::Anonymize(args) => anonymize(&args),
    }
}

struct Loaded {
    cohort: Cohort,
    products: Vec<String>,
    labels: Vec<bool>,
}

impl Loaded {
    fn scores(&self, product: &str) -> Result<Vec<f64>> {
        Ok(self.cohort.scores(product)?)
    }
}

fn load(args: &CohortArgs) -> Result<Loaded> {
    let mut bytes = Vec::new();
    if args.input.as_os_str() == "-" {
        std::io::stdin().lock().read_to_end(&mut bytes)?;
    } else {
        File::open(&args.input)?.read_to_end(&mut bytes)?;
    }
    let options = IngestOptions {
        scale: args.scale.into(),
        product_scales: args
            .product_scales
            .iter()
            .map(|(n, s)| (n.clone(), (*s).into()))
            .collect::<BTreeMap<_, _>>(),
    };
    let cohort = parse_cohort(bytes.as_slice(), &options)?;
    let products = if args.products.is_empty() {
        cohort.product_names().to_vec()
    } else {
        for p in &args.products {
            cohort.product_index(p)?;
        }
        args.products.clone()
    };
    if products.is_empty() {
        return Err(
            triage_core::Error::InvalidArgument("cohort has no score columns".into()).into(),
        );
    }
    let labels = cohort.labels();
    Ok(Loaded {
        cohort,
        products,
        labels,
    })
}

fn grid_for(scores: &[f64], grid: &GridArgs) -> Vec<f64> {
    match grid.grid_size {
        Some(k) => {
            let last = (k - 1) as f64;
            (0..k).map(|i| i as f64 / last).collect()
        }
        None => default_grid(scores),
    }
}

fn grid_name(grid: &GridArgs) -> String {
    match grid.grid_size {
        Some(k) => format!("uniform:{k}"),
        None => "observed".into(),
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct ProductEval {
    product: String,
    n_pos: usize,
    n_neg: usize,
    auc: ConfidenceInterval,
    prauc: f64,
    prauc_baseline: f64,
    tpp: TppVerdict,
    savings_at_sens90: FrameworkPoint,
}

#[derive(Debug, Serialize)]
struct PairRow {
    product_a: String,
    product_b: String,
    auc_a: f64,
    auc_b: f64,
    #[serde(flatten)]
    test: TestResult,
}

fn auc_table(rows: &[ProductEval]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record([
            "product",
            "n_pos",
            "n_neg",
            "auc",
            "auc_lo",
            "auc_hi",
            "prauc",
            "prauc_baseline",
        ])?;
        for r in rows {
            w.write_record([
                r.product.clone(),
                r.n_pos.to_string(),
                r.n_neg.to_string(),
                r.auc.estimate.to_string(),
                r.auc.lower.to_string(),
                r.auc.upper.to_string(),
                r.prauc.to_string(),
                r.prauc_baseline.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn pairwise(data: &Loaded) -> Result<Vec<PairRow>> {
    let scores: Vec<Vec<f64>> = data
        .products
        .iter()
        .map(|p| data.scores(p))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for i in 0..scores.len() {
        for j in i + 1..scores.len() {
            pairs.push((i, j));
        }
    }
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let test = delong_paired(&scores[i], &scores[j], &data.labels)?;
            Ok(PairRow {
                product_a: data.products[i].clone(),
                product_b: data.products[j].clone(),
                auc_a: triage_core::auc(&scores[i], &data.labels)?.estimate,
                auc_b: triage_core::auc(&scores[j], &data.labels)?.estimate,
                test,
            })
        })
        .collect()
}

fn compare_table(rows: &[PairRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record([
            "product_a",
            "product_b",
            "auc_a",
            "auc_b",
            "statistic",
            "p_value",
            "degenerate",
        ])?;
        for r in rows {
            w.write_record([
                r.product_a.clone(),
                r.product_b.clone(),
                r.auc_a.to_string(),
                r.auc_b.to_string(),
                r.test.statistic.to_string(),
                r.test.p_value.to_string(),
                r.test.degenerate.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn has_grades(cohort: &Cohort) -> bool {
    cohort
        .records()
        .iter()
        .any(|r| r.radiologist_grade.is_some())
}

fn human_rows(
    data: &Loaded,
    cls: &[BinaryClassification],
    level: f64,
) -> Result<Vec<HumanComparison>> {
    let jobs: Vec<(&String, BinaryClassification)> = data
        .products
        .iter()
        .flat_map(|p| cls.iter().map(move |&c| (p, c)))
        .collect();
    jobs.par_iter()
        .map(|&(p, c)| Ok(human_vs_ai(&data.cohort, p, c, level)?))
        .collect()
}

fn evaluate(args: &CohortArgs, grid: &GridArgs) -> Result<()> {
    let data = load(args)?;
    let level = args.level;
    let summary = cohort_summary(&data.cohort)?;

    let evaluated: Vec<(ProductEval, triage_core::framework::FrameworkSweep)> = data
        .products
        .par_iter()
        .map(|p| {
            let scores = data.scores(p)?;
            let labels = &data.labels;
            let curve = pr_curve(&scores, labels)?;
            let eval = ProductEval {
                product: p.clone(),
                n_pos: curve.n_pos,
                n_neg: curve.n_neg,
                auc: delong_ci(&scores, labels, level)?,
                prauc: prauc(&scores, labels)?,
                prauc_baseline: curve.baseline_precision(),
                tpp: tpp_check(&scores, labels, level)?,
                savings_at_sens90: savings_at_sensitivity(&scores, labels, 0.9, level)?,
            };
            let sweep = framework_sweep(p, &scores, labels, &grid_for(&scores, grid), level)?;
            Ok((eval, sweep))
        })
        .collect::<Result<_>>()?;
    let pairs = pairwise(&data)?;
    let human = if has_grades(&data.cohort) {
        Some(human_rows(&data, &BinaryClassification::ALL, level)?)
    } else {
        None
    };

    let mut out = Artifacts::new(&args.out);
    let (products, sweeps): (Vec<ProductEval>, Vec<_>) = evaluated.into_iter().unzip();
    out.add("auc.csv".into(), auc_table(&products)?);
    let tpp_rows: Vec<(String, TppVerdict)> = products
        .iter()
        .map(|p| (p.product.clone(), p.tpp.clone()))
        .collect();
    out.add_with("tpp.csv".into(), |w| write_tpp_csv(&tpp_rows, w))?;
    for s in &sweeps {
        out.add_with(format!("framework_{}.csv", file_stem(&s.product)), |w| {
            s.write_csv(w)
        })?;
    }
    if !pairs.is_empty() {
        out.add("compare.csv".into(), compare_table(&pairs)?);
    }
    if let Some(rows) = &human {
        out.add_with("human_comparison.csv".into(), |w| {
            write_human_comparison_csv(rows, w)
        })?;
    }
    let mut artifacts = out.names();
    artifacts.push("summary.json".into());
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "evaluate",
        "level": level,
        "grid": grid_name(grid),
        "cohort": summary,
        "products": products,
        "pairwise": pairs,
        "human_comparison": human,
        "artifacts": artifacts,
    });
    out.add_json("summary.json".into(), &report)?;
    out.commit()?;
    print_json(&report)
}

fn roc(args: &CohortArgs) -> Result<()> {
    let data = load(args)?;
    let curves: Vec<_> = data
        .products
        .par_iter()
        .map(|p| {
            let scores = data.scores(p)?;
            Ok((
                p,
                roc_curve(&scores, &data.labels)?,
                delong_ci(&scores, &data.labels, args.level)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = Artifacts::new(&args.out);
    let mut rows = Vec::new();
    for (p, curve, ci) in &curves {
        let name = format!("roc_{}.csv", file_stem(p));
        out.add_with(name.clone(), |w| curve.write_csv(w))?;
        rows.push(
            json!({ "product": p, "auc": ci, "points": curve.points.len(), "artifact": name }),
        );
    }
    out.commit()?;
    print_json(
        &json!({ "schema_version": SCHEMA_VERSION, "command": "roc", "level": args.level, "products": rows }),
    )
}

fn prc(args: &CohortArgs) -> Result<()> {
    let data = load(args)?;
    let curves: Vec<_> = data
        .products
        .par_iter()
        .map(|p| {
            let scores = data.scores(p)?;
            Ok((
                p,
                pr_curve(&scores, &data.labels)?,
                prauc(&scores, &data.labels)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = Artifacts::new(&args.out);
    let mut rows = Vec::new();
    for (p, curve, area) in &curves {
        let name = format!("pr_{}.csv", file_stem(p));
        out.add_with(name.clone(), |w| curve.write_csv(w))?;
        rows.push(json!({
            "product": p,
            "prauc": area,
            "baseline": curve.baseline_precision(),
            "points": curve.points.len(),
            "artifact": name,
        }));
    }
    out.commit()?;
    print_json(&json!({ "schema_version": SCHEMA_VERSION, "command": "prc", "products": rows }))
}

fn compare(args: &CohortArgs) -> Result<()> {
    let data = load(args)?;
    if data.products.len() < 2 {
        return Err(CliError::Usage(format!(
            "compare needs at least two products, the cohort selection has {}",
            data.products.len()
        )));
    }
    let pairs = pairwise(&data)?;
    let k = data.products.len();
    let mut matrix = vec![vec![1.0; k]; k];
    let index = |p: &str| {
        data.products
            .iter()
            .position(|q| q == p)
            .expect("selected product")
    };
    for r in &pairs {
        let (i, j) = (index(&r.product_a), index(&r.product_b));
        matrix[i][j] = r.test.p_value;
        matrix[j][i] = r.test.p_value;
    }
    let aucs: Vec<ConfidenceInterval> = data
        .products
        .par_iter()
        .map(|p| Ok(delong_ci(&data.scores(p)?, &data.labels, args.level)?))
        .collect::<Result<_>>()?;
    let mut out = Artifacts::new(&args.out);
    out.add("compare.csv".into(), compare_table(&pairs)?);
    out.commit()?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "compare",
        "level": args.level,
        "products": data.products,
        "auc": aucs,
        "p_values": matrix,
        "pairs": pairs,
    }))
}

fn match_human(args: &CohortArgs, cls: &[BinaryClassification]) -> Result<()> {
    let data = load(args)?;
    let rows = human_rows(&data, cls, args.level)?;
    let mut out = Artifacts::new(&args.out);
    out.add_with("human_comparison.csv".into(), |w| {
        write_human_comparison_csv(&rows, w)
    })?;
    out.commit()?;
    print_json(
        &json!({ "schema_version": SCHEMA_VERSION, "command": "match-human", "level": args.level, "rows": rows }),
    )
}

fn tpp(args: &CohortArgs) -> Result<()> {
    let data = load(args)?;
    let rows: Vec<(String, TppVerdict)> = data
        .products
        .par_iter()
        .map(|p| {
            Ok((
                p.clone(),
                tpp_check(&data.scores(p)?, &data.labels, args.level)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = Artifacts::new(&args.out);
    out.add_with("tpp.csv".into(), |w| write_tpp_csv(&rows, w))?;
    out.commit()?;
    let products: Vec<_> = rows
        .iter()
        .map(|(p, v)| json!({ "product": p, "verdict": v }))
        .collect();
    print_json(
        &json!({ "schema_version": SCHEMA_VERSION, "command": "tpp", "level": args.level, "products": products }),
    )
}

fn framework(args: &CohortArgs, grid: &GridArgs, sens_floor: f64) -> Result<()> {
    let data = load(args)?;
    let results: Vec<_> = data
        .products
        .par_iter()
        .map(|p| {
            let scores = data.scores(p)?;
            let sweep = framework_sweep(
                p,
                &scores,
                &data.labels,
                &grid_for(&scores, grid),
                args.level,
            )?;
            let tradeoff = tradeoff_curve(&scores, &data.labels)?;
            let best = savings_at_sensitivity(&scores, &data.labels, sens_floor, args.level)?;
            Ok((sweep, tradeoff, best))
        })
        .collect::<Result<_>>()?;
    let mut out = Artifacts::new(&args.out);
    let mut rows = Vec::new();
    for (sweep, tradeoff, best) in &results {
        let stem = file_stem(&sweep.product);
        out.add_with(format!("framework_{stem}.csv"), |w| sweep.write_csv(w))?;
        let mut buf = Vec::new();
        {
            let mut w = csv_writer(&mut buf);
            w.write_record(["tests_saved", "sensitivity"])?;
            for (saved, sens) in tradeoff {
                w.write_record([saved.to_string(), sens.to_string()])?;
            }
            w.flush()?;
        }
        out.add(format!("tradeoff_{stem}.csv"), buf);
        rows.push(json!({
            "product": sweep.product,
            "grid_points": sweep.grid.len(),
            "savings_at_floor": best,
        }));
    }
    out.commit()?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "framework",
        "level": args.level,
        "grid": grid_name(grid),
        "sens_floor": sens_floor,
        "products": rows,
    }))
}

fn subgroups(args: &CohortArgs, covariates: &[Covariate], config: &BootstrapConfig) -> Result<()> {
    let data = load(args)?;
    let mut reports = Vec::new();
    for p in &data.products {
        for &c in covariates {
            reports.push(subgroup_report(&data.cohort, p, c, config)?);
        }
    }
    let mut out = Artifacts::new(&args.out);
    for r in &reports {
        let stem = format!("{}_{}", r.covariate.name(), file_stem(&r.product));
        let mut buf = Vec::new();
        {
            let mut w = csv_writer(&mut buf);
            w.write_record([
                "stratum",
                "n",
                "n_pos",
                "analyzable",
                "auc",
                "auc_lo",
                "auc_hi",
                "prauc",
                "prauc_lo",
                "prauc_hi",
            ])?;
            for s in &r.strata {
                w.write_record([
                    s.label.clone(),
                    s.n.to_string(),
                    s.n_pos.to_string(),
                    s.analyzable.to_string(),
                    opt(s.auc.map(|c| c.estimate)),
                    opt(s.auc.map(|c| c.lower)),
                    opt(s.auc.map(|c| c.upper)),
                    opt(s.prauc.map(|c| c.estimate)),
                    opt(s.prauc.map(|c| c.lower)),
                    opt(s.prauc.map(|c| c.upper)),
                ])?;
            }
            w.flush()?;
        }
        out.add(format!("subgroups_{stem}.csv"), buf);

        let mut buf = Vec::new();
        {
            let mut w = csv_writer(&mut buf);
            let mut header = vec!["stratum".to_string()];
            header.extend(r.strata.iter().map(|s| s.label.clone()));
            w.write_record(&header)?;
            for (s, row) in r.strata.iter().zip(&r.pairwise_p) {
                let mut cells = vec![s.label.clone()];
                cells.extend(row.iter().map(|p| opt(*p)));
                w.write_record(&cells)?;
            }
            w.flush()?;
        }
        out.add(format!("pvalues_{stem}.csv"), buf);
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "subgroups",
        "level": config.level,
        "seed": config.seed,
        "replicates": config.replicates,
        "reports": reports,
    });
    out.add_json("subgroups.json".into(), &report)?;
    out.commit()?;
    print_json(&report)
}

fn density(args: &CohortArgs, bins: usize, kde_points: Option<usize>) -> Result<()> {
    let data = load(args)?;
    let hists = data
        .products
        .par_iter()
        .map(|p| Ok(density_hist(&data.cohort, p, bins)?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Artifacts::new(&args.out);
    for h in &hists {
        out.add_with(format!("density_{}.csv", file_stem(&h.product)), |w| {
            h.write_csv(w)
        })?;
    }
    if let Some(k) = kde_points {
        let at: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
        for p in &data.products {
            let column = data.cohort.product_index(p)?;
            let mut buf = Vec::new();
            {
                let mut w = csv_writer(&mut buf);
                w.write_record(["group", "x", "density", "bandwidth"])?;
                for (bac, prior, name) in DENSITY_GROUPS {
                    let values: Vec<f64> = data
                        .cohort
                        .records()
                        .iter()
                        .filter(|r| r.bac_label == bac && r.prior_tb == Some(prior))
                        .map(|r| r.scores[column])
                        .collect();
                    let Some(bw) = silverman_bandwidth(&values) else {
                        continue;
                    };
                    for (x, d) in at.iter().zip(gaussian_kde(&values, bw, &at)) {
                        w.write_record([
                            name.to_string(),
                            x.to_string(),
                            d.to_string(),
                            bw.to_string(),
                        ])?;
                    }
                }
                w.flush()?;
            }
            out.add(format!("kde_{}.csv", file_stem(p)), buf);
        }
    }
    out.commit()?;
    print_json(
        &json!({ "schema_version": SCHEMA_VERSION, "command": "density", "bins": bins, "products": hists }),
    )
}

fn synthesize(args: &SynthArgs) -> Result<()> {
    let mu = match (args.mu, args.auc) {
        (Some(mu), _) => mu,
        (None, Some(auc)) => synth::mu_for_auc(auc)?,
        (None, None) => return Err(CliError::Usage("one of --mu or --auc is required".into())),
    };
    let base = BinormalSpec::new(mu, args.prevalence, args.n, args.seed);
    let cohort = match args.prior_tb_fraction {
        Some(f) => synth::generate_mixed(&PriorTbMixSpec {
            base,
            prior_tb_fraction: f,
            neg_shift: args.neg_shift,
        })?,
        None => synth::generate(&base)?,
    };
    let mut buf = Vec::new();
    write_cohort(&cohort, &mut buf)?;
    match &args.output {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(&buf)?;
            lock.flush()?;
            Ok(())
        }
        Some(path) => {
            write_atomic(path, &buf)?;
            print_json(&json!({
                "schema_version": SCHEMA_VERSION,
                "command": "synth",
                "output": path.display().to_string(),
                "mu_sep": mu,
                "analytic_auc": synth::analytic_auc(mu),
                "n": cohort.len(),
                "n_positive": cohort.n_positive(),
                "seed": args.seed,
                "prng": synth::PRNG_NAME,
            }))
        }
    }
}

fn anonymize(args: &AnonymizeArgs) -> Result<()> {
    let rules = load_rules(File::open(&args.rules)?)?;
    let report_dir = args.report.as_deref().unwrap_or(&args.output);
    let options = BatchOptions {
        mode: if args.faithful {
            ValidationMode::Faithful
        } else {
            ValidationMode::Strict
        },
        workers: args.workers,
    };
    let report = run_batch(&args.input, &args.output, report_dir, &rules, &options)?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "anonymize",
        "mode": options.mode,
        "report": report,
    }))
}
