//! Channel circuits between Gibbs states: local interaction-variation gates,
//! block-scheduled global circuits with reversals, and the local
//! reversibility / indistinguishability audits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::linear_fit;
use crate::error::{GlabError, Result};
use crate::model::{block_partition, gibbs_state, ground_state, InteractionFamily, Lattice, Region};
use crate::qcore::channel::ChannelGate;
use crate::qcore::operator::DenseState;
use crate::recovery::{twirled_petz, Quadrature};

/// Coupling changes below this are treated as zero.
pub const ZERO_DELTA: f64 = 1e-14;
/// Default path step `δ`.
pub const DEFAULT_DELTA: f64 = 0.1;
/// Largest gate support built densely.
pub const MAX_GATE_SITES: usize = 10;

/// Radii of the block `A`, the inner buffer `B_1` and the outer buffer `B_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Radii {
    pub r_a: usize,
    pub r_1: usize,
    pub r_2: usize,
}

impl Radii {
    pub fn new(r_a: usize, r_1: usize, r_2: usize) -> Self {
        Self { r_a, r_1, r_2 }
    }

    /// `r_b = r_a + r_1 + r_2`.
    pub fn r_b(&self) -> usize {
        self.r_a + self.r_1 + self.r_2
    }
}

/// `A ⊂ AB_1 ⊂ AB` for one variation gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationGeometry {
    pub a: Region,
    pub ab1: Region,
    pub ab: Region,
}

impl VariationGeometry {
    pub fn new(lattice: &Lattice, a: &[usize], r_1: usize, r_2: usize) -> Self {
        let a = Region::new(lattice, a.to_vec());
        let ab1 = lattice.dilate(&a.sites, r_1);
        let ab = lattice.dilate(&a.sites, r_1 + r_2);
        Self { a, ab1, ab }
    }

    /// `B_2 = AB ∖ AB_1`, the sites the recovery reads from.
    pub fn b2(&self) -> Vec<usize> {
        self.ab.sites.iter().copied().filter(|s| !self.ab1.contains(*s)).collect()
    }
}

/// Realised gate `M = R^{ρ̃}_{B_2→AB} ∘ Tr_{AB_1}` with its reversal and
/// measured errors.
#[derive(Debug, Clone)]
pub struct LocalVariation {
    pub geometry: VariationGeometry,
    pub gate: ChannelGate,
    pub reversal: ChannelGate,
    /// `‖M[ρ] − ρ̃‖_1`.
    pub forward_error: f64,
    /// `‖M̃[ρ̃] − ρ‖_1`.
    pub backward_error: f64,
    /// `‖M̃∘M[ρ] − ρ‖_1`.
    pub reversal_error: f64,
    pub predicted_error: Option<f64>,
    pub rho_hash: String,
    pub rho_tilde_hash: String,
    pub warnings: Vec<String>,
}

/// Exponential fit `ε ≈ exp(intercept − r / decay_length)` of measured local
/// errors against the smaller buffer radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalErrorFit {
    pub intercept: f64,
    pub decay_length: f64,
    pub r2: f64,
    pub samples: usize,
}

impl LocalErrorFit {
    pub fn predict(&self, r_1: usize, r_2: usize) -> f64 {
        let r = r_1.min(r_2) as f64;
        (self.intercept - r / self.decay_length).exp()
    }
}

/// Fit `ln ε` against `min(r_1, r_2)`; errors at the numerical floor are
/// skipped. Returns `None` with fewer than two usable samples or a
/// non-decaying trend.
pub fn fit_local_errors(samples: &[(usize, usize, f64)]) -> Option<LocalErrorFit> {
    let usable: Vec<&(usize, usize, f64)> = samples.iter().filter(|s| s.2 > 1e-14).collect();
    if usable.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = usable.iter().map(|s| s.0.min(s.1) as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|s| s.2.ln()).collect();
    let (a, b, r2) = linear_fit(&xs, &ys);
    if b >= 0.0 {
        return None;
    }
    Some(LocalErrorFit { intercept: a, decay_length: -1.0 / b, r2, samples: usable.len() })
}

fn check_variation_inside(family: &InteractionFamily, delta: &[f64], a: &Region) -> Result<()> {
    if delta.len() != family.terms.len() {
        return Err(GlabError::Config(format!("Δβ has {} entries for {} terms", delta.len(), family.terms.len())));
    }
    for (k, d) in delta.iter().enumerate() {
        if d.abs() > ZERO_DELTA && !a.contains_all(&family.terms[k].support) {
            return Err(GlabError::Domain(format!(
                "term {} with Δβ = {d} is not supported inside A = {:?}",
                family.terms[k].name, a.sites
            )));
        }
    }
    Ok(())
}

fn recovery_gate(reference: &DenseState, geom: &VariationGeometry, quadrature: &Quadrature) -> Result<(ChannelGate, Option<String>)> {
    if geom.ab.len() > MAX_GATE_SITES {
        return Err(GlabError::Resource(format!("gate support of {} sites exceeds {MAX_GATE_SITES}", geom.ab.len())));
    }
    let marginal = reference.marginal(&geom.ab.sites)?;
    let map = twirled_petz(&marginal, &geom.ab1.sites, quadrature)?;
    let warning = map.conditioning_warning();
    Ok((map.gate, warning))
}

fn build_variation(
    rho: &DenseState,
    rho_tilde: &DenseState,
    geom: VariationGeometry,
    quadrature: &Quadrature,
) -> Result<LocalVariation> {
    let (gate, w1) = recovery_gate(rho_tilde, &geom, quadrature)?;
    let (reversal, w2) = recovery_gate(rho, &geom, quadrature)?;
    let forward = gate.apply(rho)?;
    let forward_error = forward.trace_distance(rho_tilde)?;
    let backward_error = reversal.apply(rho_tilde)?.trace_distance(rho)?;
    let reversal_error = reversal.apply(&forward)?.trace_distance(rho)?;
    Ok(LocalVariation {
        geometry: geom,
        gate,
        reversal,
        forward_error,
        backward_error,
        reversal_error,
        predicted_error: None,
        rho_hash: rho.hash(),
        rho_tilde_hash: rho_tilde.hash(),
        warnings: w1.into_iter().chain(w2).collect(),
    })
}

/// Gate turning `ρ_β` into `ρ_{β+Δβ}` for a variation supported in `a`.
pub fn local_variation_gate(
    family: &InteractionFamily,
    delta: &[f64],
    a: &[usize],
    r_1: usize,
    r_2: usize,
    quadrature: &Quadrature,
    fit: Option<&LocalErrorFit>,
) -> Result<LocalVariation> {
    let geom = VariationGeometry::new(&family.lattice, a, r_1, r_2);
    check_variation_inside(family, delta, &geom.a)?;
    let rho = gibbs_state(family)?;
    let beta: Vec<f64> = family.beta.iter().zip(delta).map(|(b, d)| b + d).collect();
    let rho_tilde = gibbs_state(&family.with_beta(beta)?)?;
    let mut v = build_variation(&rho, &rho_tilde, geom, quadrature)?;
    v.predicted_error = fit.map(|f| f.predict(r_1, r_2));
    Ok(v)
}

/// A layered channel circuit with index-aligned reversal gates.
#[derive(Debug, Clone)]
pub struct ChannelCircuit {
    pub layers: Vec<Vec<ChannelGate>>,
    pub reversals: Vec<Vec<ChannelGate>>,
    /// Coupling path `β_0 … β_n` the circuit was built along.
    pub path: Vec<Vec<f64>>,
    pub radii: Option<Radii>,
    pub max_diameter: usize,
}

impl ChannelCircuit {
    pub fn new(lattice: &Lattice, layers: Vec<Vec<ChannelGate>>, reversals: Vec<Vec<ChannelGate>>) -> Result<Self> {
        if layers.len() != reversals.len() || layers.iter().zip(&reversals).any(|(l, r)| l.len() != r.len()) {
            return Err(GlabError::Contract("reversal list is not aligned with the gates".into()));
        }
        for (t, (layer, rev)) in layers.iter().zip(&reversals).enumerate() {
            for (g, r) in layer.iter().zip(rev) {
                if r.support.iter().any(|s| !g.support.contains(s)) {
                    return Err(GlabError::Contract(format!("layer {t}: reversal support {:?} leaves gate support {:?}", r.support, g.support)));
                }
            }
            for (i, g) in layer.iter().enumerate() {
                for h in &layer[i + 1..] {
                    if g.support.iter().any(|s| h.support.contains(s)) {
                        return Err(GlabError::Contract(format!(
                            "layer {t}: supports {:?} and {:?} overlap",
                            g.support, h.support
                        )));
                    }
                }
            }
        }
        let max_diameter = layers.iter().flatten().map(|g| lattice.diameter(&g.support)).max().unwrap_or(0);
        Ok(Self { layers, reversals, path: vec![], radii: None, max_diameter })
    }

    pub fn empty() -> Self {
        Self { layers: vec![], reversals: vec![], path: vec![], radii: None, max_diameter: 0 }
    }

    /// `|C|`.
    pub fn n_gates(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// `T`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `rng C = T · max gate diameter`.
    pub fn range(&self) -> usize {
        self.depth() * self.max_diameter
    }

    /// First `t` layers applied to `state`.
    pub fn apply_prefix(&self, state: &DenseState, t: usize) -> Result<DenseState> {
        let mut x = state.clone();
        for layer in &self.layers[..t.min(self.layers.len())] {
            for g in layer {
                x = g.apply(&x)?;
            }
        }
        Ok(x)
    }

    pub fn apply(&self, state: &DenseState) -> Result<DenseState> {
        self.apply_prefix(state, self.depth())
    }

    /// `C̃ = C̃_1 ∘ … ∘ C̃_T`: reversal layers in reverse order.
    pub fn apply_reversal(&self, state: &DenseState) -> Result<DenseState> {
        let mut x = state.clone();
        for layer in self.reversals.iter().rev() {
            for g in layer {
                x = g.apply(&x)?;
            }
        }
        Ok(x)
    }

    pub fn describe(&self, lattice: &Lattice) -> CircuitDescription {
        let gate = |g: &ChannelGate| GateDescription {
            support: g.support.clone(),
            kept: g.kept.clone(),
            kind: format!("{:?}", g.kind).to_lowercase(),
            reference_hash: g.tag.clone(),
            diameter: lattice.diameter(&g.support),
        };
        CircuitDescription {
            depth: self.depth(),
            n_gates: self.n_gates(),
            range: self.range(),
            radii: self.radii,
            path: self.path.clone(),
            layers: self.layers.iter().map(|l| l.iter().map(gate).collect()).collect(),
            reversals: self.reversals.iter().map(|l| l.iter().map(gate).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDescription {
    pub support: Vec<usize>,
    pub kept: Vec<usize>,
    pub kind: String,
    pub reference_hash: String,
    pub diameter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitDescription {
    pub depth: usize,
    pub n_gates: usize,
    pub range: usize,
    pub radii: Option<Radii>,
    pub path: Vec<Vec<f64>>,
    pub layers: Vec<Vec<GateDescription>>,
    pub reversals: Vec<Vec<GateDescription>>,
}

/// One block variation `ρ^{(i)} → ρ^{(i+1)}` inside the global circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationStep {
    /// Position in the sequential order.
    pub index: usize,
    /// Path segment `m` (from `β_{m−1}` to `β_m`, zero-based).
    pub segment: usize,
    pub block: usize,
    pub layer: usize,
    /// Non-zero `(term, Δβ)` pairs.
    pub delta: Vec<(usize, f64)>,
    pub rho_hash: String,
    pub rho_next_hash: String,
    /// `‖M^{(i)}[ρ^{(i)}] − ρ^{(i+1)}‖_1`.
    pub local_error: f64,
    /// `‖M̃^{(i)}∘M^{(i)}[ρ^{(i)}] − ρ^{(i)}‖_1`.
    pub reversal_error: f64,
}

/// Row of the error ledger CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    pub block: usize,
    pub local_error: f64,
    pub cumulative_bound: f64,
    pub measured_global_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitLedger {
    pub steps: Vec<VariationStep>,
    pub rows: Vec<LedgerRow>,
    /// `Σ_i ‖M^{(i)}[ρ^{(i)}] − ρ^{(i+1)}‖_1`.
    pub telescoped_bound: f64,
    /// `‖C[ρ_{β_0}] − ρ_{β_n}‖_1`.
    pub global_error: f64,
    /// Largest error of any gate prefix against its exact intermediate state.
    pub max_prefix_error: f64,
    pub warnings: Vec<String>,
}

impl CircuitLedger {
    /// Telescoping check: every prefix error is at most the running sum of
    /// local errors, with `1e-9` slack per gate.
    pub fn telescoping_holds(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, r)| r.measured_global_error <= r.cumulative_bound + (i + 1) as f64 * 1e-9)
    }
}

/// Settings of [`global_circuit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    pub radii: Radii,
    pub delta: f64,
    pub quadrature: Quadrature,
}

impl CircuitConfig {
    pub fn new(radii: Radii) -> Self {
        Self { radii, delta: DEFAULT_DELTA, quadrature: Quadrature::Exact }
    }
}

/// `n = ⌈|β − β'|_∞ / δ⌉` equal steps from `start` to `end`.
pub fn uniform_path(start: &[f64], end: &[f64], delta: f64) -> Result<Vec<Vec<f64>>> {
    if start.len() != end.len() {
        return Err(GlabError::Config("path endpoints have different lengths".into()));
    }
    if !(delta > 0.0) {
        return Err(GlabError::Config(format!("δ must be positive, got {delta}")));
    }
    let span = start.iter().zip(end).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max);
    let n = (span / delta - 1e-12).ceil().max(0.0) as usize;
    Ok((0..=n)
        .map(|m| {
            let s = if n == 0 { 0.0 } else { m as f64 / n as f64 };
            start.iter().zip(end).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect())
}

fn check_path(path: &[Vec<f64>], n_terms: usize, delta: f64) -> Result<()> {
    if path.is_empty() {
        return Err(GlabError::Path("empty path".into()));
    }
    if path.iter().any(|b| b.len() != n_terms) {
        return Err(GlabError::Config(format!("path points must have {n_terms} couplings")));
    }
    for m in 1..path.len() {
        let step = path[m].iter().zip(&path[m - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if step > delta + 1e-12 {
            let span = path[0].iter().zip(&path[path.len() - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let suggested = (span / delta - 1e-12).ceil().max(1.0) as usize;
            return Err(GlabError::Path(format!(
                "step {m} has |Δβ|_∞ = {step:.6} > δ = {delta}; use n ≥ {suggested} uniform steps"
            )));
        }
    }
    Ok(())
}

struct PlannedStep {
    segment: usize,
    layer_slot: usize,
    block: usize,
    delta: Vec<f64>,
}

/// Circuit carrying `ρ_{β_0}` to `ρ_{β_n}` along `path`, varying one block at
/// a time. Blocks are taken in lexicographic centre order and greedily
/// grouped into layers whose centres are at least `2 r_b` apart.
pub fn global_circuit(family: &InteractionFamily, path: &[Vec<f64>], cfg: &CircuitConfig) -> Result<(ChannelCircuit, CircuitLedger)> {
    let n_terms = family.terms.len();
    check_path(path, n_terms, cfg.delta)?;
    let lattice = &family.lattice;
    let radii = cfg.radii;
    let partition = block_partition(lattice, family, radii.r_a)?;
    let schedule = partition.layers(lattice, 2 * radii.r_b());

    // Sequential order: path segment, then layer, then block within a layer.
    let mut plan: Vec<PlannedStep> = vec![];
    let mut layer_count = 0;
    for m in 1..path.len() {
        for layer in &schedule {
            let mut used = false;
            for &x in layer {
                let mut delta = vec![0.0; n_terms];
                for k in partition.terms_of(x) {
                    delta[k] = path[m][k] - path[m - 1][k];
                }
                if delta.iter().all(|d| d.abs() <= ZERO_DELTA) {
                    continue;
                }
                plan.push(PlannedStep { segment: m - 1, layer_slot: layer_count, block: x, delta });
                used = true;
            }
            if used {
                layer_count += 1;
            }
        }
    }

    // Exact intermediate couplings β^{(0)}, …, β^{(N)}.
    let mut betas = vec![path[0].clone()];
    for step in &plan {
        let prev = betas.last().expect("nonempty");
        betas.push(prev.iter().zip(&step.delta).map(|(b, d)| b + d).collect());
    }
    let states: Vec<DenseState> = betas
        .par_iter()
        .map(|b| gibbs_state(&family.with_beta(b.clone())?))
        .collect::<Result<_>>()?;

    let built: Vec<LocalVariation> = plan
        .par_iter()
        .enumerate()
        .map(|(i, step)| {
            let geom = VariationGeometry::new(lattice, &partition.blocks[step.block].sites, radii.r_1, radii.r_2);
            build_variation(&states[i], &states[i + 1], geom, &cfg.quadrature)
        })
        .collect::<Result<_>>()?;

    let mut layers: Vec<Vec<ChannelGate>> = vec![vec![]; layer_count];
    let mut reversals: Vec<Vec<ChannelGate>> = vec![vec![]; layer_count];
    let mut steps = vec![];
    let mut warnings = vec![];
    for (i, (step, v)) in plan.iter().zip(&built).enumerate() {
        layers[step.layer_slot].push(v.gate.clone());
        reversals[step.layer_slot].push(v.reversal.clone());
        warnings.extend(v.warnings.iter().map(|w| format!("step {i}: {w}")));
        steps.push(VariationStep {
            index: i,
            segment: step.segment,
            block: step.block,
            layer: step.layer_slot,
            delta: step.delta.iter().enumerate().filter(|(_, d)| d.abs() > ZERO_DELTA).map(|(k, &d)| (k, d)).collect(),
            rho_hash: v.rho_hash.clone(),
            rho_next_hash: v.rho_tilde_hash.clone(),
            local_error: v.forward_error,
            reversal_error: v.reversal_error,
        });
    }
    let mut circuit = ChannelCircuit::new(lattice, layers, reversals)?;
    circuit.path = path.to_vec();
    circuit.radii = Some(radii);

    // Replay gate by gate; the layered circuit equals the sequential product
    // because gates in a layer have disjoint supports.
    let mut x = states[0].clone();
    let mut rows = vec![];
    let mut cumulative = 0.0;
    let mut max_prefix: f64 = 0.0;
    for (i, (step, v)) in plan.iter().zip(&built).enumerate() {
        x = v.gate.apply(&x)?;
        cumulative += v.forward_error;
        let measured = x.trace_distance(&states[i + 1])?;
        max_prefix = max_prefix.max(measured);
        rows.push(LedgerRow {
            step: i,
            block: step.block,
            local_error: v.forward_error,
            cumulative_bound: cumulative,
            measured_global_error: measured,
        });
    }
    let global_error = match rows.last() {
        Some(r) => r.measured_global_error,
        None => 0.0,
    };
    let ledger = CircuitLedger { steps, rows, telescoped_bound: cumulative, global_error, max_prefix_error: max_prefix, warnings };
    Ok((circuit, ledger))
}

/// Local-reversibility audit of a circuit on an input state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrReport {
    /// `‖Ẽ∘E∘C'[ρ] − C'[ρ]‖_1` per layer and gate.
    pub residuals: Vec<Vec<f64>>,
    /// `ε_LR`, the largest residual.
    pub epsilon_lr: f64,
    /// `‖C̃∘C[ρ] − ρ‖_1`.
    pub full_reversal: f64,
    pub n_gates: usize,
}

impl LrReport {
    /// `‖C̃∘C[ρ] − ρ‖_1 ≤ |C| · ε_LR + slack`.
    pub fn reversal_bound_holds(&self, slack: f64) -> bool {
        self.full_reversal <= self.n_gates as f64 * self.epsilon_lr + slack
    }
}

pub fn lr_audit(circuit: &ChannelCircuit, rho: &DenseState) -> Result<LrReport> {
    let mut x = rho.clone();
    let mut residuals = vec![];
    for (layer, rev) in circuit.layers.iter().zip(&circuit.reversals) {
        let res: Vec<f64> = layer
            .par_iter()
            .zip(rev.par_iter())
            .map(|(g, r)| r.apply(&g.apply(&x)?)?.trace_distance(&x))
            .collect::<Result<_>>()?;
        residuals.push(res);
        for g in layer {
            x = g.apply(&x)?;
        }
    }
    let back = circuit.apply_reversal(&x)?;
    let full_reversal = back.trace_distance(rho)?;
    let epsilon_lr = residuals.iter().flatten().copied().fold(0.0, f64::max);
    Ok(LrReport { residuals, epsilon_lr, full_reversal, n_gates: circuit.n_gates() })
}

/// A candidate pair of disturbing channels for the LI audit, each a gate
/// sequence applied left to right.
#[derive(Debug, Clone)]
pub struct LiCandidate {
    pub name: String,
    /// `D` with `D[ρ] ≈ σ`.
    pub forward: Vec<ChannelGate>,
    /// `D'` with `D'[σ] ≈ ρ`.
    pub backward: Vec<ChannelGate>,
}

impl LiCandidate {
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.forward.iter().chain(&self.backward).flat_map(|g| g.support.iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn avoids(&self, region: &[usize]) -> bool {
        self.support().iter().all(|s| !region.contains(s))
    }
}

fn apply_seq(gates: &[ChannelGate], state: &DenseState) -> Result<DenseState> {
    let mut x = state.clone();
    for g in gates {
        x = g.apply(&x)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiRegionResult {
    pub region: Vec<usize>,
    /// Best candidate and its `max(‖D[ρ] − σ‖_1, ‖D'[σ] − ρ‖_1)`.
    pub best: Option<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiReport {
    pub regions: Vec<LiRegionResult>,
    /// Upper bound on `ε_LI` over the covered regions.
    pub epsilon_li: f64,
    /// Some region had no admissible candidate. This is not a refutation.
    pub inconclusive: bool,
}

/// Upper bound on the LI distance of `rho` and `sigma` over `regions`, using
/// only candidates whose support avoids the region.
pub fn li_audit(rho: &DenseState, sigma: &DenseState, regions: &[Vec<usize>], candidates: &[LiCandidate]) -> Result<LiReport> {
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| {
            let f = apply_seq(&c.forward, rho)?.trace_distance(sigma)?;
            let b = apply_seq(&c.backward, sigma)?.trace_distance(rho)?;
            Ok(f.max(b))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![];
    let mut inconclusive = false;
    let mut eps: f64 = 0.0;
    for region in regions {
        let best = candidates
            .iter()
            .zip(&scores)
            .filter(|(c, _)| c.avoids(region))
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(c, &s)| (c.name.clone(), s));
        match &best {
            Some((_, s)) => eps = eps.max(*s),
            None => inconclusive = true,
        }
        out.push(LiRegionResult { region: region.clone(), best });
    }
    Ok(LiReport { regions: out, epsilon_li: eps, inconclusive })
}

/// Gates of the backward light cone of `support`: walking from the last
/// layer down, a gate joins when it meets the cone grown so far.
pub fn light_cone(circuit: &ChannelCircuit, support: &[usize]) -> Vec<Vec<bool>> {
    let mut cone: Vec<usize> = support.to_vec();
    let mut marks: Vec<Vec<bool>> = circuit.layers.iter().map(|l| vec![false; l.len()]).collect();
    for t in (0..circuit.layers.len()).rev() {
        let mut grown = vec![];
        for (i, g) in circuit.layers[t].iter().enumerate() {
            if g.support.iter().any(|s| cone.contains(s)) {
                marks[t][i] = true;
                grown.extend(g.support.iter().copied());
            }
        }
        cone.extend(grown);
        cone.sort_unstable();
        cone.dedup();
    }
    marks
}

/// Conjugate a base pair through a circuit: `D^C = C_{cone} ∘ D ∘ C̃_{cone}`
/// where the cone is the light cone of the base support.
pub fn conjugate_candidate(base: &LiCandidate, circuit: &ChannelCircuit) -> LiCandidate {
    let marks = light_cone(circuit, &base.support());
    let mut undo = vec![];
    for t in (0..circuit.layers.len()).rev() {
        for (i, r) in circuit.reversals[t].iter().enumerate() {
            if marks[t][i] {
                undo.push(r.clone());
            }
        }
    }
    let mut redo = vec![];
    for (t, layer) in circuit.layers.iter().enumerate() {
        for (i, g) in layer.iter().enumerate() {
            if marks[t][i] {
                redo.push(g.clone());
            }
        }
    }
    let wrap = |d: &[ChannelGate]| -> Vec<ChannelGate> { undo.iter().chain(d).chain(&redo).cloned().collect() };
    LiCandidate { name: format!("{}^C", base.name), forward: wrap(&base.forward), backward: wrap(&base.backward) }
}

/// All simply connected chain intervals of diameter at most `max_diam`, or
/// lattice balls for higher dimensions.
pub fn small_regions(lattice: &Lattice, max_diam: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![];
    for c in 0..lattice.n_sites() {
        for r in 0..=max_diam / 2 {
            out.push(lattice.ball(c, r).sites);
        }
        if lattice.dimension == 1 {
            for len in 1..=max_diam {
                let sites: Vec<usize> = (0..=len)
                    .filter_map(|k| {
                        let s = c + k;
                        if s < lattice.n_sites() {
                            Some(s)
                        } else if lattice.periodic[0] {
                            Some(s % lattice.n_sites())
                        } else {
                            None
                        }
                    })
                    .collect();
                if sites.len() == len + 1 {
                    out.push(sites);
                }
            }
        }
    }
    for s in &mut out {
        s.sort_unstable();
    }
    out.sort();
    out.dedup();
    out.retain(|s| lattice.diameter(s) <= max_diam);
    out
}

/// `s` with `‖ρ_{sβ} − ρ_{g.s.}‖_1 ≤ ε`, found by doubling.
#[derive(Debug, Clone)]
pub struct GroundApproximation {
    pub s: f64,
    pub distance: f64,
    pub degeneracy: usize,
    pub ground: DenseState,
    pub thermal: DenseState,
}

/// Energy window defining the ground space.
pub const GROUND_WINDOW: f64 = 1e-8;

pub fn ground_scale(family: &InteractionFamily, eps: f64, s_max: f64) -> Result<GroundApproximation> {
    let (ground, degeneracy) = ground_state(family, GROUND_WINDOW)?;
    let mut s = 1.0;
    loop {
        let thermal = gibbs_state(&family.scaled(s))?;
        let distance = thermal.trace_distance(&ground)?;
        if distance <= eps {
            return Ok(GroundApproximation { s, distance, degeneracy, ground, thermal });
        }
        if s >= s_max {
            return Err(GlabError::Domain(format!("‖ρ_sβ − ρ_gs‖_1 = {distance:.3e} > {eps} at s = {s}")));
        }
        s = (2.0 * s).min(s_max);
    }
}

/// Triangle inequality `‖C[ρ_gs] − ρ'‖ ≤ ‖C[ρ_sβ] − ρ'‖ + ‖ρ_sβ − ρ_gs‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroTemperatureCheck {
    pub lhs: f64,
    pub circuit_error: f64,
    pub ground_distance: f64,
}

impl ZeroTemperatureCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.circuit_error + self.ground_distance + slack
    }
}

pub fn zero_temperature_check(circuit: &ChannelCircuit, approx: &GroundApproximation, target: &DenseState) -> Result<ZeroTemperatureCheck> {
    Ok(ZeroTemperatureCheck {
        lhs: circuit.apply(&approx.ground)?.trace_distance(target)?,
        circuit_error: circuit.apply(&approx.thermal)?.trace_distance(target)?,
        ground_distance: approx.distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ising_chain, tfim_chain};
    use crate::qcore::channel::GateKind;
    use crate::qcore::linalg::{self, c, Mat};

    #[test]
    fn zero_variation_is_markov_exact_on_commuting_chain() {
        let fam = ising_chain(6, false, 0.7, 0.3).unwrap();
        let delta = vec![0.0; fam.terms.len()];
        let v = local_variation_gate(&fam, &delta, &[2, 3], 1, 1, &Quadrature::Exact, None).unwrap();
        assert!(v.forward_error < 1e-8, "{}", v.forward_error);
        assert_eq!(v.rho_hash, v.rho_tilde_hash);
    }

    #[test]
    fn reversal_is_bounded_by_directional_errors() {
        let fam = tfim_chain(6, false, 0.5, 1.0).unwrap();
        let mut delta = vec![0.0; fam.terms.len()];
        for (k, t) in fam.terms.iter().enumerate() {
            if t.support.iter().all(|s| [2, 3].contains(s)) {
                delta[k] = 0.1;
            }
        }
        let v = local_variation_gate(&fam, &delta, &[2, 3], 1, 1, &Quadrature::Exact, None).unwrap();
        assert!(v.forward_error > 1e-6);
        assert!(v.reversal_error <= 2.0 * v.forward_error.max(v.backward_error) + 1e-9);
    }

    #[test]
    fn variation_outside_block_is_rejected() {
        let fam = ising_chain(5, false, 0.5, 0.0).unwrap();
        let mut delta = vec![0.0; fam.terms.len()];
        delta[0] = 0.1;
        assert!(matches!(
            local_variation_gate(&fam, &delta, &[3, 4], 1, 1, &Quadrature::Exact, None),
            Err(GlabError::Domain(_))
        ));
    }

    #[test]
    fn trivial_path_gives_empty_circuit() {
        let fam = ising_chain(6, false, 0.4, 0.2).unwrap();
        let path = uniform_path(&fam.beta, &fam.beta, 0.1).unwrap();
        assert_eq!(path.len(), 1);
        let (c, l) = global_circuit(&fam, &path, &CircuitConfig::new(Radii::new(1, 1, 1))).unwrap();
        assert_eq!(c.n_gates(), 0);
        assert_eq!(c.range(), 0);
        assert_eq!(l.global_error, 0.0);
    }

    #[test]
    fn uniform_path_rounds_up() {
        let p = uniform_path(&[0.2, 0.2], &[0.6, 0.55], 0.1).unwrap();
        assert_eq!(p.len(), 5);
        let p = uniform_path(&[0.0], &[0.25], 0.1).unwrap();
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn coarse_path_is_rejected_with_suggestion() {
        let fam = ising_chain(5, false, 0.2, 0.0).unwrap();
        let end = vec![0.6; fam.terms.len()];
        let path = vec![fam.beta.clone(), end];
        match global_circuit(&fam, &path, &CircuitConfig::new(Radii::new(1, 1, 1))) {
            Err(GlabError::Path(msg)) => assert!(msg.contains("n ≥ 4"), "{msg}"),
            other => panic!("expected path error, got {other:?}"),
        }
    }

    #[test]
    fn global_circuit_telescopes_and_reverses() {
        let fam = ising_chain(6, false, 0.3, 0.5).unwrap();
        let end: Vec<f64> = fam.beta.iter().map(|b| b + 0.2).collect();
        let cfg = CircuitConfig::new(Radii::new(1, 1, 1));
        let path = uniform_path(&fam.beta, &end, cfg.delta).unwrap();
        let (c, ledger) = global_circuit(&fam, &path, &cfg).unwrap();
        assert!(c.n_gates() > 0);
        assert!(ledger.telescoping_holds());
        assert!(ledger.global_error <= ledger.telescoped_bound + 1e-8);
        let rho = gibbs_state(&fam).unwrap();
        let lr = lr_audit(&c, &rho).unwrap();
        assert!(lr.reversal_bound_holds(1e-8));
        assert!(lr.epsilon_lr <= 2.0 * ledger.max_prefix_error + 1e-8, "{} vs {}", lr.epsilon_lr, ledger.max_prefix_error);
        for layer in &c.layers {
            for (i, g) in layer.iter().enumerate() {
                for h in &layer[i + 1..] {
                    assert!(g.support.iter().all(|s| !h.support.contains(s)));
                }
            }
        }
    }

    #[test]
    fn chain_layering_respects_coloring_bound() {
        let fam = ising_chain(8, false, 0.3, 0.0).unwrap();
        let radii = Radii::new(1, 1, 1);
        let part = block_partition(&fam.lattice, &fam, radii.r_a).unwrap();
        let layers = part.layers(&fam.lattice, 2 * radii.r_b());
        let bound = (2 * radii.r_b()).div_ceil(2 * radii.r_a - fam.range);
        assert!(layers.len() <= bound);
    }

    #[test]
    fn identity_circuit_is_perfectly_reversible() {
        let fam = ising_chain(4, false, 0.5, 0.0).unwrap();
        let lat = &fam.lattice;
        let layers = vec![vec![ChannelGate::identity(vec![0, 1]), ChannelGate::identity(vec![2, 3])]];
        let c = ChannelCircuit::new(lat, layers.clone(), layers).unwrap();
        let rho = gibbs_state(&fam).unwrap();
        let lr = lr_audit(&c, &rho).unwrap();
        assert_eq!(lr.epsilon_lr, 0.0);
        assert!(lr.full_reversal < 1e-14);
        assert_eq!(c.range(), 1);
    }

    #[test]
    fn overlapping_layer_is_rejected() {
        let lat = Lattice::chain(4, false).unwrap();
        let layers = vec![vec![ChannelGate::identity(vec![0, 1]), ChannelGate::identity(vec![1, 2])]];
        assert!(ChannelCircuit::new(&lat, layers.clone(), layers).is_err());
    }

    fn ghz(sign: f64, n: usize) -> DenseState {
        let d = 1 << n;
        let mut psi = vec![c(0.0); d];
        psi[0] = c(std::f64::consts::FRAC_1_SQRT_2);
        psi[d - 1] = c(sign * std::f64::consts::FRAC_1_SQRT_2);
        DenseState::pure(&psi, &(0..n).collect::<Vec<_>>()).unwrap()
    }

    fn phase_flip(site: usize) -> ChannelGate {
        ChannelGate::from_kraus(vec![site], &[linalg::pauli('Z')], GateKind::Custom).unwrap()
    }

    #[test]
    fn identical_states_are_indistinguishable() {
        let rho = ghz(1.0, 3);
        let cand = LiCandidate { name: "id".into(), forward: vec![], backward: vec![] };
        let r = li_audit(&rho, &rho, &[vec![0], vec![0, 1]], &[cand]).unwrap();
        assert_eq!(r.epsilon_li, 0.0);
        assert!(!r.inconclusive);
    }

    #[test]
    fn repetition_codewords_are_locally_indistinguishable() {
        let lat = Lattice::chain(4, false).unwrap();
        let (p, m) = (ghz(1.0, 4), ghz(-1.0, 4));
        let cands: Vec<LiCandidate> = (0..4)
            .map(|s| LiCandidate { name: format!("Z{s}"), forward: vec![phase_flip(s)], backward: vec![phase_flip(s)] })
            .collect();
        let regions = small_regions(&lat, 2);
        let r = li_audit(&p, &m, &regions, &cands).unwrap();
        assert!(!r.inconclusive);
        assert!(r.epsilon_li < 1e-12);
        let all = li_audit(&p, &m, &[vec![0, 1, 2, 3]], &cands).unwrap();
        assert!(all.inconclusive);
    }

    #[test]
    fn conjugated_candidate_transfers_through_a_circuit() {
        // CNOT layers are exactly reversible, so the transferred distance
        // stays zero.
        let n = 5;
        let lat = Lattice::chain(n, false).unwrap();
        let (p, m) = (ghz(1.0, n), ghz(-1.0, n));
        let cnot = {
            let mut u = Mat::zeros(4, 4);
            for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                u[(i, j)] = c(1.0);
            }
            u
        };
        let g = |a: usize, b: usize| ChannelGate::from_kraus(vec![a, b], std::slice::from_ref(&cnot), GateKind::Custom).unwrap();
        let layers = vec![vec![g(0, 1)], vec![g(3, 4)]];
        let c = ChannelCircuit::new(&lat, layers.clone(), layers).unwrap();
        let lr = lr_audit(&c, &p).unwrap();
        assert!(lr.epsilon_lr < 1e-12);
        let base = LiCandidate { name: "Z0".into(), forward: vec![phase_flip(0)], backward: vec![phase_flip(0)] };
        let conj = conjugate_candidate(&base, &c);
        assert!(conj.avoids(&[3, 4]));
        let (cp, cm) = (c.apply(&p).unwrap(), c.apply(&m).unwrap());
        let r = li_audit(&cp, &cm, &[vec![3, 4]], &[conj]).unwrap();
        let gates = c.n_gates() as f64;
        assert!(r.epsilon_li <= (2.0 * gates * gates + gates) * lr.epsilon_lr + 1e-8);
    }

    #[test]
    fn ground_scale_doubles_until_close() {
        let fam = ising_chain(4, false, 1.0, 0.0).unwrap();
        let g = ground_scale(&fam, 1e-3, 64.0).unwrap();
        assert_eq!(g.degeneracy, 2);
        assert!(g.distance <= 1e-3);
        assert!(g.s >= 2.0);
    }

    #[test]
    fn local_error_fit_recovers_decay() {
        let samples: Vec<(usize, usize, f64)> = (1..4).map(|r| (r, r, (0.5 - r as f64 / 0.7).exp())).collect();
        let f = fit_local_errors(&samples).unwrap();
        assert!((f.decay_length - 0.7).abs() < 1e-9);
        assert!((f.predict(2, 5) - samples[1].2).abs() < 1e-12);
    }
}
