//! One function per task. Each returns audits, CSV bodies and headline
//! metrics; nothing here touches the filesystem.

use std::collections::BTreeMap;

use anyhow::{bail, Context};
use glab_core::circuits::{global_circuit, lr_audit, uniform_path, CircuitConfig};
use glab_core::correlations::{clustering_scan, stable_clustering_probe, ClusteringSample, CovarianceConfig, ProbeCriteria};
use glab_core::lindblad::{flow_integrate, heatbath_generator, theorem4_point, BetaPath};
use glab_core::memory::{memory_experiment, theorem2_bound_audit, MemoryConfig, QuantumCode};
use glab_core::model::{annulus_partition, gibbs_data, AnnulusPartition, ALGEBRA_SITE_CAP};
use glab_core::qcore::info::cmi;
use glab_core::qcore::linalg::{self, pauli_string};
use glab_core::qcore::NormAscent;
use glab_core::recovery::twirled_petz;
use glab_core::stabilizer::toric2d_appendix_g;
use glab_core::verify::{run_all, run_criterion, CriterionReport};
use glab_core::{Audit, AuditSet, DenseOperator, InteractionFamily, VerifyOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ModelSpec, Task};

#[derive(Debug, Default)]
pub struct TaskOutput {
    pub audits: AuditSet,
    /// `(file name, body)`; bodies are deterministic for a fixed config.
    pub csvs: Vec<(String, String)>,
    pub json: Vec<(String, Value)>,
    pub results: Value,
    pub metrics: BTreeMap<String, f64>,
}

impl TaskOutput {
    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.into(), v);
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// CSV with an explicit header, for row types with no struct.
pub fn to_csv_records(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn run_task(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    match cfg.task {
        Task::Gibbs => gibbs(cfg),
        Task::Cluster => cluster(cfg),
        Task::Cmi => cmi_task(cfg),
        Task::Connect => connect(cfg),
        Task::LindbladFlow => flow(cfg),
        Task::Toric => toric(cfg),
        Task::Memory => memory(cfg),
        Task::VerifyAll => verify(&VerifyOptions { quick: cfg.params.quick, seed: cfg.seed }, None),
    }
}

fn gibbs(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    let fam = cfg.family()?;
    let data = gibbs_data(&fam)?;
    let rho = &data.state;
    let labels = rho.labels().to_vec();
    let mut out = TaskOutput::default();

    #[derive(Serialize)]
    struct SiteRow {
        site: usize,
        x: f64,
        y: f64,
        z: f64,
    }
    let mut sites = vec![];
    for &s in &labels {
        let e = |p: &str| -> anyhow::Result<f64> {
            let o = DenseOperator::new(pauli_string(p), vec![s])?.embed(&labels)?;
            Ok(rho.op.expectation(&o)?.re)
        };
        sites.push(SiteRow { site: s, x: e("X")?, y: e("Y")?, z: e("Z")? });
    }
    let h = fam.hamiltonian()?;
    let energy = rho.op.expectation(&h)?.re;
    let entropy = rho.entropy();
    let e0 = data.energies[0];
    let log_z = -e0 + data.energies.iter().map(|e| (-(e - e0)).exp()).sum::<f64>().ln();
    let spectrum: Vec<Vec<String>> = data
        .energies
        .iter()
        .enumerate()
        .map(|(k, e)| vec![k.to_string(), e.to_string(), ((-(e - e0)).exp() / (log_z + e0).exp()).to_string()])
        .collect();
    let eig = linalg::eigvalsh(rho.mat());
    out.audits.push(Audit::close("trace", rho.op.trace().re, 1.0, 1e-12, "normalization"));
    out.audits.push(Audit::le("negative eigenvalue", -eig[0], 0.0, 1e-12, "positivity"));
    out.audits.push(Audit::close(
        "free energy",
        energy - entropy * std::f64::consts::LN_2,
        -log_z,
        1e-9,
        "Gibbs variational identity",
    ));
    out.csvs.push(("sites.csv".into(), to_csv(&sites)?));
    out.csvs.push(("spectrum.csv".into(), to_csv_records(&["index", "energy", "weight"], &spectrum)?));
    out.metric("energy", energy);
    out.metric("entropy_bits", entropy);
    out.metric("log_z", log_z);
    out.results = json!({ "n_sites": fam.n_sites(), "n_terms": fam.terms.len(), "energy": energy, "entropy_bits": entropy, "log_z": log_z, "state_hash": rho.hash() });
    Ok(out)
}

/// Partitions around the centre for every `r_1` that leaves `C` non-empty.
fn partitions(cfg: &ExperimentConfig, fam: &InteractionFamily) -> Vec<AnnulusPartition> {
    let lat = &fam.lattice;
    let center = cfg.center(fam.n_sites());
    let (r_a, r_2) = (cfg.params.r_a as usize, cfg.params.r_2 as usize);
    (0..fam.n_sites())
        .map_while(|r_1| annulus_partition(lat, center, r_a, r_1, r_2).ok().filter(|p| !p.c.is_empty()))
        .collect()
}

fn cov_config(cfg: &ExperimentConfig) -> CovarianceConfig {
    CovarianceConfig { seed: cfg.seed, ..CovarianceConfig::default() }
}

fn cluster(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    let fam = cfg.family()?;
    // The restricted algebra is only generated on small regions.
    let (parts, skipped): (Vec<_>, Vec<_>) =
        partitions(cfg, &fam).into_iter().partition(|p| p.a.len() <= ALGEBRA_SITE_CAP && p.c.len() <= ALGEBRA_SITE_CAP);
    let skipped: Vec<usize> = skipped.iter().map(|p| p.distance_ac(&fam.lattice)).collect();
    let cov = cov_config(cfg);
    let fit = clustering_scan(&fam, &parts, &cov)?;

    #[derive(Serialize)]
    struct Row {
        separation: usize,
        lower: f64,
        upper: f64,
        restriction: String,
        perturbation_id: usize,
    }
    let row = |s: &ClusteringSample, id: usize| Row {
        separation: s.separation,
        lower: s.lower,
        upper: s.upper,
        restriction: format!("{:?}", s.restriction).to_lowercase(),
        perturbation_id: id,
    };
    let mut rows: Vec<Row> = fit.samples.iter().map(|s| row(s, 0)).collect();
    let mut out = TaskOutput::default();
    let mut probe = Value::Null;
    if cfg.params.probe_samples > 0 {
        let p = stable_clustering_probe(&fam, cfg.params.probe_delta, cfg.params.probe_samples, &parts, &ProbeCriteria::default(), &cov)?;
        rows.extend(p.worst.samples.iter().map(|s| row(s, 1)));
        out.metric("worst_xi", p.worst.xi);
        probe = serde_json::to_value(&p)?;
    }
    for r in &rows {
        out.audits.push(Audit::le(
            format!("bracket sep={} id={}", r.separation, r.perturbation_id),
            r.lower,
            r.upper,
            1e-12,
            "covariance lower bound below upper bound",
        ));
    }
    out.csvs.push(("covariance.csv".into(), to_csv(&rows)?));
    out.metric("xi", fit.xi);
    out.metric("r_squared", fit.r_squared);
    out.metric("max_upper", fit.samples.iter().map(|s| s.upper).fold(0.0, f64::max));
    out.results = json!({ "fit": fit, "probe": probe, "skipped_separations": skipped });
    Ok(out)
}

fn cmi_task(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    let fam = cfg.family()?;
    let rho = glab_core::model::gibbs_state(&fam)?;
    let commuting = fam.is_commuting()?;
    let lat = &fam.lattice;

    #[derive(Serialize)]
    struct Row {
        r_1: usize,
        r_2: usize,
        separation: usize,
        cmi: f64,
        recovery_error: f64,
        bound: f64,
    }
    let mut rows = vec![];
    let mut out = TaskOutput::default();
    for p in partitions(cfg, &fam) {
        let b = p.b();
        let i = cmi(&rho, &p.a.sites, &b, &p.c.sites)?;
        let mut bc = b.clone();
        bc.extend_from_slice(&p.c.sites);
        let mut abc = p.ab();
        abc.extend_from_slice(&p.c.sites);
        let map = twirled_petz(&rho.marginal(&bc)?, &p.c.sites, &cfg.params.quadrature)?;
        let err = map.apply(&rho.marginal(&p.ab())?)?.trace_distance(&rho.marginal(&abc)?)?;
        let bound = (4.0 * std::f64::consts::LN_2 * i).sqrt();
        let sep = p.distance_ac(lat);
        out.audits.push(Audit::le(format!("recovery r_1={}", p.r_1), err, bound, cfg.params.slack, "approximate Markov recovery"));
        if commuting && sep > fam.range {
            out.audits.push(Audit::le(format!("cmi r_1={}", p.r_1), i, 0.0, 1e-9, "Markov property of commuting Gibbs states"));
        }
        if p.r_1 == cfg.params.r_1 as usize {
            out.metric("cmi", i);
            out.metric("recovery_error", err);
        }
        rows.push(Row { r_1: p.r_1, r_2: p.r_2, separation: sep, cmi: i, recovery_error: err, bound });
    }
    if rows.is_empty() {
        bail!("no annulus partition with a non-empty C fits the lattice");
    }
    out.metric("max_cmi", rows.iter().map(|r| r.cmi).fold(0.0, f64::max));
    out.results = json!({ "commuting": commuting, "rows": rows.len() });
    out.csvs.push(("cmi.csv".into(), to_csv(&rows)?));
    Ok(out)
}

fn connect(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    let fam = cfg.family()?;
    let end = cfg.end_family()?;
    let ccfg = CircuitConfig { radii: cfg.radii(), delta: cfg.params.delta, quadrature: cfg.params.quadrature.clone() };
    let path = uniform_path(&fam.beta, &end.beta, ccfg.delta)?;
    let (circuit, ledger) = global_circuit(&fam, &path, &ccfg)?;
    let lr = lr_audit(&circuit, &glab_core::model::gibbs_state(&fam)?)?;
    let slack = cfg.params.slack;
    let mut out = TaskOutput::default();
    for (i, r) in ledger.rows.iter().enumerate() {
        out.audits.push(Audit::le(
            format!("prefix {}", r.step),
            r.measured_global_error,
            r.cumulative_bound,
            (i + 1) as f64 * 1e-9,
            "error accumulation",
        ));
    }
    out.audits.push(Audit::le("global error", ledger.global_error, ledger.telescoped_bound, slack, "error accumulation"));
    out.audits.push(Audit::le("eps_LR", lr.epsilon_lr, 2.0 * ledger.max_prefix_error, slack, "local reversibility of a circuit"));
    out.audits.push(Audit::le(
        "full reversal",
        lr.full_reversal,
        circuit.n_gates() as f64 * lr.epsilon_lr,
        slack,
        "reversal of the whole circuit",
    ));

    #[derive(Serialize)]
    struct StepRow {
        index: usize,
        segment: usize,
        layer: usize,
        block: usize,
        local_error: f64,
        reversal_error: f64,
    }
    let steps: Vec<StepRow> = ledger
        .steps
        .iter()
        .map(|s| StepRow {
            index: s.index,
            segment: s.segment,
            layer: s.layer,
            block: s.block,
            local_error: s.local_error,
            reversal_error: s.reversal_error,
        })
        .collect();
    out.csvs.push(("ledger.csv".into(), to_csv(&ledger.rows)?));
    out.csvs.push(("steps.csv".into(), to_csv(&steps)?));
    out.json.push(("circuit.json".into(), serde_json::to_value(circuit.describe(&fam.lattice))?));
    for (k, v) in [
        ("global_error", ledger.global_error),
        ("telescoped_bound", ledger.telescoped_bound),
        ("max_prefix_error", ledger.max_prefix_error),
        ("epsilon_lr", lr.epsilon_lr),
        ("full_reversal", lr.full_reversal),
        ("n_gates", circuit.n_gates() as f64),
        ("depth", circuit.depth() as f64),
        ("range", circuit.range() as f64),
        ("path_steps", (path.len() - 1) as f64),
    ] {
        out.metric(k, v);
    }
    out.results = json!({
        "path_steps": path.len() - 1,
        "n_gates": circuit.n_gates(),
        "depth": circuit.depth(),
        "range": circuit.range(),
        "global_error": ledger.global_error,
        "telescoped_bound": ledger.telescoped_bound,
        "max_prefix_error": ledger.max_prefix_error,
        "lr": { "epsilon_lr": lr.epsilon_lr, "full_reversal": lr.full_reversal },
        "warnings": ledger.warnings,
    });
    Ok(out)
}

fn flow(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    let fam = cfg.family()?;
    let end = cfg.end_family()?;
    let path = BetaPath::new(fam.beta.clone(), end.beta.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cov = cov_config(cfg);
    let points = cfg.params.s_points;

    #[derive(Serialize)]
    struct Row {
        s: f64,
        r: usize,
        residual: f64,
        bound: f64,
        marginal_bound: f64,
        derivative_gap: f64,
        max_term_norm: f64,
    }
    #[derive(Serialize)]
    struct FlowRow {
        r: usize,
        steps: usize,
        error: f64,
        error_refined: f64,
        baseline: f64,
    }
    let mut rows = vec![];
    let mut flows = vec![];
    let mut out = TaskOutput::default();
    for &r in &cfg.params.flow_radii {
        let r = r as usize;
        for k in 0..points {
            let s = (k as f64 + 0.5) / points as f64;
            let pt = theorem4_point(&fam, &path, s, r, &cov, NormAscent::default(), &mut rng)?;
            out.audits.push(Audit::le(format!("residual s={s:.4} r={r}"), pt.lhs, pt.cov_bound, 1e-7, "generator error from clustering"));
            out.audits.push(Audit::le(format!("term norm s={s:.4} r={r}"), pt.max_term_norm, 4.0, 1e-6, "generator term norm"));
            rows.push(Row {
                s,
                r,
                residual: pt.lhs,
                bound: pt.cov_bound,
                marginal_bound: pt.marginal_bound,
                derivative_gap: pt.derivative_gap,
                max_term_norm: pt.max_term_norm,
            });
        }
        let run = flow_integrate(&fam, &path, r, cfg.params.flow_steps)?;
        out.metric(&format!("flow_error_r{r}"), run.error_refined);
        flows.push(FlowRow { r, steps: run.steps, error: run.error, error_refined: run.error_refined, baseline: run.baseline });
    }
    for w in flows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.r > a.r {
            let (ga, gb) = ((a.error - a.error_refined).abs(), (b.error - b.error_refined).abs());
            out.audits.push(Audit::le(
                format!("flow error decreases r={}", b.r),
                b.error_refined + gb,
                a.error_refined - ga,
                0.0,
                "end-to-end flow error",
            ));
        }
    }
    out.metric("max_residual", rows.iter().map(|r| r.residual).fold(0.0, f64::max));
    out.csvs.push(("flow_points.csv".into(), to_csv(&rows)?));
    out.csvs.push(("flow.csv".into(), to_csv(&flows)?));
    out.results = json!({ "points": rows.len(), "radii": cfg.params.flow_radii });
    Ok(out)
}

fn toric(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    let Some(ModelSpec::Toric2d { l, beta_plaquette, .. }) = &cfg.model else {
        bail!("task toric needs a toric2d model");
    };
    let p = &cfg.params;
    let a: Vec<(usize, usize)> = p.region_a.iter().map(|x| (x[0], x[1])).collect();
    let b: Vec<(usize, usize)> = p.region_b.iter().map(|x| (x[0], x[1])).collect();
    let r = toric2d_appendix_g(*l, &a, &b, *beta_plaquette, p.beta0, p.dense)?;
    let mut out = TaskOutput::default();
    out.audits.push(Audit::close("<O1>", r.o1, r.o1_formula, 1e-10, "plaquette product expectation"));
    out.audits.push(Audit::close("<O2>", r.o2, r.o2_formula, 1e-10, "plaquette product expectation"));
    out.audits.push(Audit::close("<O1 O2>", r.o1o2, r.o1o2_formula, 1e-10, "nested loop expectation"));
    let dense = r.dense.map(|(x, y, z)| [x, y, z]);
    if let Some([d1, d2, d12]) = dense {
        out.audits.push(Audit::close("dense <O1>", d1, r.o1_formula, 1e-10, "plaquette product expectation"));
        out.audits.push(Audit::close("dense <O2>", d2, r.o2_formula, 1e-10, "plaquette product expectation"));
        out.audits.push(Audit::close("dense <O1 O2>", d12, r.o1o2_formula, 1e-10, "nested loop expectation"));
    }
    if let Some(lb) = r.lower_bound() {
        out.audits.push(Audit::le("connected lower bound", lb, r.connected, 1e-12, "long-range correlation"));
        out.metric("lower_bound", lb);
    }
    let rows: Vec<Vec<String>> = [("O1", r.o1, r.o1_formula), ("O2", r.o2, r.o2_formula), ("O1O2", r.o1o2, r.o1o2_formula)]
        .iter()
        .enumerate()
        .map(|(k, (name, v, f))| {
            let d = dense.map(|d| d[k].to_string()).unwrap_or_default();
            vec![name.to_string(), v.to_string(), f.to_string(), d]
        })
        .collect();
    out.csvs.push(("correlators.csv".into(), to_csv_records(&["quantity", "stabilizer", "formula", "dense"], &rows)?));
    out.metric("connected", r.connected);
    out.metric("o1o2", r.o1o2);
    out.results = serde_json::to_value(&r)?;
    Ok(out)
}

fn memory(cfg: &ExperimentConfig) -> anyhow::Result<TaskOutput> {
    let fam = cfg.family()?;
    let target = cfg.end_family()?;
    let code = match cfg.params.code.as_str() {
        "repetition" => QuantumCode::repetition(fam.n_sites())?,
        _ => QuantumCode::from_ground_space(&fam, 1e-8)?,
    };
    let gen = heatbath_generator(&target, cfg.params.heatbath_radius as usize)?;
    let mcfg = MemoryConfig {
        radii: cfg.radii(),
        delta: cfg.params.delta,
        quadrature: cfg.params.quadrature.clone(),
        times: cfg.params.times.clone(),
        ..MemoryConfig::default()
    };
    let run = memory_experiment(&code, &fam, &target, &gen, &mcfg).context("memory experiment")?;
    let rep = theorem2_bound_audit(&run);
    let mut out = TaskOutput::default();
    for c in &rep.checks {
        out.audits.push(Audit::le(c.name.clone(), c.lhs, c.rhs, 1e-7, "memory bound chain"));
    }
    for cw in &run.codewords {
        out.audits.push(Audit::le(
            format!("{} t=0 error", cw.omega),
            cw.epsilon_0,
            run.n_gates as f64 * cw.lr.epsilon_lr,
            cfg.params.slack,
            "encoding error from local reversibility",
        ));
    }

    #[derive(Serialize)]
    struct Row<'a> {
        t: f64,
        omega: &'a str,
        epsilon_t: f64,
        bound: f64,
        drift: f64,
    }
    let rows: Vec<Row> = run.rows.iter().map(|r| Row { t: r.t, omega: &r.omega, epsilon_t: r.epsilon_t, bound: r.bound, drift: r.drift }).collect();
    out.csvs.push(("memory.csv".into(), to_csv(&rows)?));
    out.json.push(("memory_run.json".into(), serde_json::to_value(&run)?));
    out.metric("epsilon_c", run.epsilon_c);
    out.metric("zero_temperature_s", run.zero_temperature_s);
    out.metric("n_gates", run.n_gates as f64);
    out.metric("max_epsilon_t", run.rows.iter().map(|r| r.epsilon_t).fold(0.0, f64::max));
    out.results = json!({
        "code": run.code,
        "rank": run.rank,
        "epsilon_c": run.epsilon_c,
        "epsilon_lr": rep.epsilon_lr,
        "fitted_prefactor": rep.fitted_prefactor,
        "conditional": rep.conditional,
    });
    Ok(out)
}

/// Acceptance suite as a task. `only` selects criteria.
pub fn verify(opts: &VerifyOptions, only: Option<&[usize]>) -> anyhow::Result<TaskOutput> {
    let reports: Vec<CriterionReport> = match only {
        Some(ids) => ids.iter().map(|&id| run_criterion(id, opts)).collect(),
        None => run_all(opts),
    };
    let mut out = TaskOutput::default();
    let mut rows = vec![];
    for r in &reports {
        eprintln!("{}", r.line());
        for a in &r.audits.audits {
            let mut a = a.clone();
            a.name = format!("c{} {}", r.id, a.name);
            out.audits.push(a);
        }
        if let Some(e) = &r.error {
            out.audits.push(Audit::holds(format!("c{} evaluated", r.id), false, e.clone()));
        }
        rows.push(vec![r.id.to_string(), r.title.clone(), r.pass().to_string(), r.audits.len().to_string(), r.audits.failures().len().to_string()]);
    }
    out.csvs.push(("criteria.csv".into(), to_csv_records(&["id", "title", "pass", "audits", "failures"], &rows)?));
    out.metric("criteria_passed", reports.iter().filter(|r| r.pass()).count() as f64);
    out.results = json!({ "quick": opts.quick, "seed": opts.seed, "criteria": reports });
    Ok(out)
}
