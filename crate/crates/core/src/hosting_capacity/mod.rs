//! Per-section generation and load hosting capacity.
//!
//! HC at an interval is the largest whole-kW injection at a section's
//! `to_node` that passes every criterion of the regime. The search brackets
//! `[0, cap]` and narrows it with Illinois steps on the smallest scaled
//! margin, dropping to bisection when a step stalls. A monotonicity guard
//! falls back to a 1 kW linear sweep.

mod interval;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use interval::{DayType, IntervalIndex, IntervalKey, Stat, DAYS_IN_MONTH, GRID_LEN};

use crate::criteria::{evaluate, first_failure, CriteriaRegime, Criterion, CriterionReport};
use crate::error::{HcError, Result};
use crate::network::EnergizedView;
use crate::power_flow::{InjectionSet, NodeLoads, PowerFlow, PowerFlowSolution, SolverOptions};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HcKind {
    Generation,
    Load,
}

impl HcKind {
    pub const ALL: [HcKind; 2] = [HcKind::Generation, HcKind::Load];

    pub fn label(self) -> &'static str {
        match self {
            HcKind::Generation => "generation",
            HcKind::Load => "load",
        }
    }
}

impl fmt::Display for HcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for HcKind {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generation" => Ok(HcKind::Generation),
            "load" => Ok(HcKind::Load),
            _ => Err(HcError::InvalidArgument(format!("unknown HC kind `{s}`"))),
        }
    }
}

/// Supplies the net node loads of one scenario at any interval.
pub trait LoadModel: Sync {
    fn scenario_id(&self) -> &str;

    fn node_loads(&self, key: IntervalKey) -> Result<NodeLoads>;

    /// Interval used for flat studies: the p10 hour of least total net load
    /// for generation, the p90 hour of greatest total net load for load.
    fn flat_key(&self, kind: HcKind) -> Result<IntervalKey> {
        let stat = match kind {
            HcKind::Generation => Stat::P10,
            HcKind::Load => Stat::P90,
        };
        let mut best: Option<(f64, IntervalKey)> = None;
        for hour in 0..24 {
            let key = IntervalKey::stat(stat, hour);
            let total = self.node_loads(key)?.total().re;
            let better = match (kind, best) {
                (_, None) => true,
                (HcKind::Generation, Some((b, _))) => total < b,
                (HcKind::Load, Some((b, _))) => total > b,
            };
            if better {
                best = Some((total, key));
            }
        }
        Ok(best.expect("24 hours").1)
    }
}

/// The same loads at every interval.
#[derive(Debug, Clone)]
pub struct ConstantLoads {
    pub id: String,
    pub loads: NodeLoads,
}

impl ConstantLoads {
    pub fn new(id: impl Into<String>, loads: NodeLoads) -> Self {
        ConstantLoads {
            id: id.into(),
            loads,
        }
    }
}

impl LoadModel for ConstantLoads {
    fn scenario_id(&self) -> &str {
        &self.id
    }

    fn node_loads(&self, _key: IntervalKey) -> Result<NodeLoads> {
        Ok(self.loads.clone())
    }
}

/// What stopped the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Limit {
    Criterion(Criterion),
    /// Nothing failed up to the search cap.
    Cap,
    /// Section not energized in any configuration considered.
    DeEnergized,
}

impl Limit {
    pub fn label(self) -> &'static str {
        match self {
            Limit::Criterion(c) => c.label(),
            Limit::Cap => "cap",
            Limit::DeEnergized => "de_energized",
        }
    }

    pub fn criterion(self) -> Option<Criterion> {
        match self {
            Limit::Criterion(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Limit {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cap" => Ok(Limit::Cap),
            "de_energized" => Ok(Limit::DeEnergized),
            other => other.parse().map(Limit::Criterion),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcEntry {
    pub kw: f64,
    pub limit: Limit,
    /// Configuration the limit came from, set by transfer aggregation.
    pub config: Option<String>,
    pub linear_fallback: bool,
}

impl HcEntry {
    fn new(kw: u64, limit: Limit) -> Self {
        HcEntry {
            kw: kw as f64,
            limit,
            config: None,
            linear_fallback: false,
        }
    }

    /// `criterion` or `criterion@config`.
    pub fn binding_label(&self) -> String {
        match &self.config {
            Some(c) => format!("{}@{}", self.limit, c),
            None => self.limit.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcResult {
    pub section_id: String,
    pub kind: HcKind,
    pub regime: String,
    pub config: String,
    pub scenario: String,
    pub flat_kw: f64,
    pub flat_limit: Limit,
    pub flat_config: Option<String>,
    pub profile: BTreeMap<IntervalKey, HcEntry>,
}

impl HcResult {
    /// Builds a result whose flat value is the profile minimum (first in key
    /// order on ties).
    pub fn from_profile(
        section_id: impl Into<String>,
        kind: HcKind,
        regime: impl Into<String>,
        config: impl Into<String>,
        scenario: impl Into<String>,
        profile: BTreeMap<IntervalKey, HcEntry>,
    ) -> Self {
        let mut flat: Option<&HcEntry> = None;
        for e in profile.values() {
            if flat.is_none_or(|f| e.kw < f.kw) {
                flat = Some(e);
            }
        }
        let (flat_kw, flat_limit, flat_config) = match flat {
            Some(e) => (e.kw, e.limit, e.config.clone()),
            None => (0.0, Limit::DeEnergized, None),
        };
        HcResult {
            section_id: section_id.into(),
            kind,
            regime: regime.into(),
            config: config.into(),
            scenario: scenario.into(),
            flat_kw,
            flat_limit,
            flat_config,
            profile,
        }
    }

    pub fn flat_binding_label(&self) -> String {
        match &self.flat_config {
            Some(c) => format!("{}@{}", self.flat_limit, c),
            None => self.flat_limit.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HcOptions {
    /// Search cap as a multiple of max(tree peak kVA, head thermal kVA).
    pub cap_factor: f64,
    pub monotonicity_guard: bool,
    /// Run generation candidates under the volt-var curve.
    pub volt_var: bool,
    pub solver: SolverOptions,
}

impl Default for HcOptions {
    fn default() -> Self {
        HcOptions {
            cap_factor: 2.0,
            monotonicity_guard: true,
            volt_var: false,
            solver: SolverOptions::default(),
        }
    }
}

/// Base-case solves of one interval, shared by every section search.
pub struct Prepared<'v, T: Scalar> {
    pub key: IntervalKey,
    loads: NodeLoads,
    base: Vec<Option<PowerFlowSolution<'v, T>>>,
}

impl<'v, T: Scalar> Prepared<'v, T> {
    pub fn loads(&self) -> &NodeLoads {
        &self.loads
    }

    pub fn base(&self, tree: usize) -> Option<&PowerFlowSolution<'v, T>> {
        self.base.get(tree).and_then(Option::as_ref)
    }
}

/// HC search bound to one energized view and one regime.
pub struct HcEngine<'v, T: Scalar = f64> {
    view: &'v EnergizedView<'v>,
    regime: CriteriaRegime,
    options: HcOptions,
    pf: PowerFlow<'v, T>,
    caps: Vec<u64>,
}

impl<'v, T: Scalar> HcEngine<'v, T> {
    pub fn new(view: &'v EnergizedView<'v>, regime: &CriteriaRegime) -> Result<Self> {
        Self::with_options(view, regime, HcOptions::default())
    }

    pub fn with_options(
        view: &'v EnergizedView<'v>,
        regime: &CriteriaRegime,
        options: HcOptions,
    ) -> Result<Self> {
        regime.validate()?;
        if !(options.cap_factor > 0.0) {
            return Err(HcError::InvalidArgument("cap factor must be positive".into()));
        }
        let network = view.network();
        let caps = view
            .trees()
            .iter()
            .map(|tree| {
                if tree.is_empty() {
                    return 0;
                }
                let peak: f64 = tree
                    .nodes
                    .iter()
                    .flat_map(|&n| network.loads_at(n))
                    .map(|&l| network.loads()[l].peak_kva())
                    .sum();
                let head = &network.sections()[network.head_section(tree.source)];
                let root = &network.nodes()[tree.nodes[0]];
                let thermal =
                    head.thermal_rating * root.nominal_voltage * head.phases.len() as f64 / 1000.0;
                (options.cap_factor * peak.max(thermal)).ceil() as u64
            })
            .collect();
        Ok(HcEngine {
            view,
            regime: regime.clone(),
            pf: PowerFlow::new(view, options.solver),
            options,
            caps,
        })
    }

    pub fn view(&self) -> &'v EnergizedView<'v> {
        self.view
    }

    pub fn regime(&self) -> &CriteriaRegime {
        &self.regime
    }

    /// Search cap in kW for the tree holding `section`.
    pub fn cap_kw(&self, section: usize) -> Option<f64> {
        self.view
            .section_slot(section)
            .map(|(t, _)| self.caps[t] as f64)
    }

    /// Solves every tree at zero injection.
    pub fn prepare(&self, key: IntervalKey, loads: NodeLoads) -> Result<Prepared<'v, T>> {
        let empty = InjectionSet::new();
        let base = (0..self.view.trees().len())
            .into_par_iter()
            .map(|t| {
                if self.view.trees()[t].is_empty() {
                    Ok(None)
                } else {
                    self.pf.solve_tree(t, &loads, &empty, None).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared { key, loads, base })
    }

    /// Where an injection for `section` goes: (tree, node).
    fn site(&self, section: usize) -> Result<(usize, usize)> {
        let network = self.view.network();
        let sec = &network.sections()[section];
        let node = network.node_idx(&sec.to_node).expect("validated");
        match (self.view.section_energized(section), self.view.node_slot(node)) {
            (true, Some((t, _))) => Ok((t, node)),
            _ => Err(HcError::DeEnergized(sec.id.clone())),
        }
    }

    /// Criterion failing at `x` kW, or `None` when all pass.
    pub fn check(
        &self,
        prep: &Prepared<'v, T>,
        section: usize,
        kind: HcKind,
        x: u64,
    ) -> Result<Option<Criterion>> {
        Ok(self.probe(prep, section, kind, x)?.0)
    }

    /// Failing criterion plus a scaled margin that is >= 0 exactly when it passes.
    /// The margin is `None` when the solve did not converge.
    fn probe(
        &self,
        prep: &Prepared<'v, T>,
        section: usize,
        kind: HcKind,
        x: u64,
    ) -> Result<(Option<Criterion>, Option<f64>)> {
        let (t, node) = self.site(section)?;
        let base = prep.base[t].as_ref().expect("energized tree is prepared");
        if x == 0 {
            return Ok(scored(&evaluate(base, base, &self.regime)));
        }
        let kw = x as f64;
        let mut inj = match kind {
            HcKind::Generation => InjectionSet::single(node, Complex64::new(kw, 0.0)),
            HcKind::Load => InjectionSet::single(node, Complex64::new(-kw, 0.0)),
        };
        inj.volt_var_enabled = self.options.volt_var && kind == HcKind::Generation;
        let with = self
            .pf
            .solve_tree(t, &prep.loads, &inj, base.tree_solution(t))?;
        let without = match kind {
            HcKind::Generation => base,
            // added load has no "before" state for the deviation check
            HcKind::Load => &with,
        };
        Ok(scored(&evaluate(&with, without, &self.regime)))
    }

    /// HC of `section` at the prepared interval.
    pub fn search(&self, prep: &Prepared<'v, T>, section: usize, kind: HcKind) -> Result<HcEntry> {
        self.search_from(prep, section, kind, None)
    }

    /// Like [`search`](Self::search), but brackets outward from `hint` (usually
    /// the HC at a neighbouring interval). The result does not depend on the hint.
    pub fn search_from(
        &self,
        prep: &Prepared<'v, T>,
        section: usize,
        kind: HcKind,
        hint: Option<u64>,
    ) -> Result<HcEntry> {
        let (t, _) = self.site(section)?;
        let (fail0, m0) = self.probe(prep, section, kind, 0)?;
        if let Some(c) = fail0 {
            return Ok(HcEntry::new(0, Limit::Criterion(c)));
        }
        let cap = self.caps[t];
        let Some((lo, f_lo, hi, hi_fail, f_hi)) = self.bracket(prep, section, kind, cap, m0, hint)? else {
            return Ok(HcEntry::new(cap, Limit::Cap));
        };
        let (mut lo, mut hi, mut hi_fail) = (lo, hi, hi_fail);
        // f_lo >= 0 and f_hi < 0 while both are known
        let (mut f_lo, mut f_hi) = (f_lo, f_hi);
        let mut last_side = 0i8;
        // two interpolated steps that fail to halve the bracket force a bisection
        let mut bisect_next = false;
        let (mut window, mut window_steps) = (hi - lo, 0);
        while hi - lo > 1 {
            let interpolated = match (f_lo, f_hi) {
                (Some(a), Some(b)) if !bisect_next && a - b > 0.0 => {
                    let r = lo as f64 + a / (a - b) * (hi - lo) as f64;
                    Some((r.round() as u64).clamp(lo + 1, hi - 1))
                }
                _ => None,
            };
            let x = interpolated.unwrap_or(lo + (hi - lo) / 2);
            let (fail, m) = self.probe(prep, section, kind, x)?;
            match fail {
                None => {
                    lo = x;
                    f_lo = m;
                    if last_side == -1 {
                        f_hi = f_hi.map(|v| v / 2.0);
                    }
                    last_side = -1;
                }
                Some(c) => {
                    hi = x;
                    hi_fail = c;
                    f_hi = m;
                    if last_side == 1 {
                        f_lo = f_lo.map(|v| v / 2.0);
                    }
                    last_side = 1;
                }
            }
            window_steps += 1;
            if interpolated.is_none() || window_steps == 2 {
                bisect_next = interpolated.is_some() && (hi - lo) * 2 > window;
                window = hi - lo;
                window_steps = 0;
            }
        }
        if self.options.monotonicity_guard {
            let mut broken = false;
            for k in 1..=3 {
                let below = lo * k / 4;
                if below > 0 && below < lo && self.check(prep, section, kind, below)?.is_some() {
                    broken = true;
                    break;
                }
            }
            let above = hi + (cap - hi) / 2;
            broken = broken
                || (above > hi && above < cap && self.check(prep, section, kind, above)?.is_none());
            if broken {
                let mut entry = self.linear_sweep(prep, section, kind, cap)?;
                entry.linear_fallback = true;
                return Ok(entry);
            }
        }
        Ok(HcEntry::new(lo, Limit::Criterion(hi_fail)))
    }

    /// A passing `lo` and failing `hi` with their scaled margins, or `None`
    /// when `cap` passes. Zero is known to pass.
    #[allow(clippy::type_complexity)]
    fn bracket(
        &self,
        prep: &Prepared<'v, T>,
        section: usize,
        kind: HcKind,
        cap: u64,
        m0: Option<f64>,
        hint: Option<u64>,
    ) -> Result<Option<(u64, Option<f64>, u64, Criterion, Option<f64>)>> {
        let Some(h) = hint.map(|h| h.min(cap)) else {
            let (fail, m) = self.probe(prep, section, kind, cap)?;
            return Ok(fail.map(|c| (0, m0, cap, c, m)));
        };
        let (fail_h, m_h) = if h == 0 { (None, m0) } else { self.probe(prep, section, kind, h)? };
        let mut step = 1u64;
        match fail_h {
            None => {
                let (mut lo, mut f_lo) = (h, m_h);
                loop {
                    let x = lo.saturating_add(step).min(cap);
                    if x == lo {
                        return Ok(None);
                    }
                    let (fail, m) = self.probe(prep, section, kind, x)?;
                    match fail {
                        Some(c) => return Ok(Some((lo, f_lo, x, c, m))),
                        None => (lo, f_lo) = (x, m),
                    }
                    step = step.saturating_mul(4);
                }
            }
            Some(c) => {
                let (mut hi, mut hi_fail, mut f_hi) = (h, c, m_h);
                loop {
                    let x = hi.saturating_sub(step);
                    if x == 0 {
                        return Ok(Some((0, m0, hi, hi_fail, f_hi)));
                    }
                    let (fail, m) = self.probe(prep, section, kind, x)?;
                    match fail {
                        None => return Ok(Some((x, m, hi, hi_fail, f_hi))),
                        Some(c) => (hi, hi_fail, f_hi) = (x, c, m),
                    }
                    step = step.saturating_mul(4);
                }
            }
        }
    }

    /// First failure walking up from zero in 1 kW steps.
    pub fn linear_sweep(
        &self,
        prep: &Prepared<'v, T>,
        section: usize,
        kind: HcKind,
        cap: u64,
    ) -> Result<HcEntry> {
        for x in 0..=cap {
            if let Some(c) = self.check(prep, section, kind, x)? {
                return Ok(HcEntry::new(x.saturating_sub(1), Limit::Criterion(c)));
            }
        }
        Ok(HcEntry::new(cap, Limit::Cap))
    }

    /// HC of every listed section at every key. Sections must be energized.
    /// Results follow the order of `sections`.
    pub fn sweep(
        &self,
        sections: &[usize],
        model: &dyn LoadModel,
        kind: HcKind,
        keys: &[IntervalKey],
    ) -> Result<Vec<HcResult>> {
        let mut profiles: Vec<BTreeMap<IntervalKey, HcEntry>> = vec![BTreeMap::new(); sections.len()];
        // the previous interval's HC seeds each bracket
        let mut hints: Vec<Option<u64>> = vec![None; sections.len()];
        for &key in keys {
            let prep = self.prepare(key, model.node_loads(key)?)?;
            let entries = sections
                .par_iter()
                .zip(&hints)
                .map(|(&s, &h)| self.search_from(&prep, s, kind, h))
                .collect::<Result<Vec<_>>>()?;
            for (h, e) in hints.iter_mut().zip(&entries) {
                *h = Some(e.kw as u64);
            }
            for (profile, e) in profiles.iter_mut().zip(entries) {
                profile.insert(key, e);
            }
        }
        let network = self.view.network();
        Ok(sections
            .iter()
            .zip(profiles)
            .map(|(&s, profile)| {
                HcResult::from_profile(
                    network.sections()[s].id.clone(),
                    kind,
                    self.regime.name.clone(),
                    self.view.config_id(),
                    model.scenario_id(),
                    profile,
                )
            })
            .collect())
    }

    /// Energized sections of the view in network order.
    pub fn energized_sections(&self) -> Vec<usize> {
        (0..self.view.network().sections().len())
            .filter(|&s| self.site(s).is_ok())
            .collect()
    }
}

/// Margin scale per criterion, so one unit means roughly the same headroom.
fn margin_scale(c: Criterion) -> Option<f64> {
    match c {
        Criterion::NonConvergence => None,
        Criterion::Thermal => Some(100.0),
        Criterion::OverVoltage | Criterion::UnderVoltage | Criterion::VoltageDeviation => Some(0.01),
        Criterion::ReverseFlowHead | Criterion::OpflexDevice => Some(1000.0),
        Criterion::Protection => Some(1.0),
    }
}

fn scored(reports: &[CriterionReport]) -> (Option<Criterion>, Option<f64>) {
    let fail = first_failure(reports);
    let mut m = f64::INFINITY;
    for r in reports {
        match margin_scale(r.criterion) {
            Some(k) if r.worst_margin.is_finite() => m = m.min(r.worst_margin / k),
            _ if !r.passed => return (fail, None),
            _ => {}
        }
    }
    let m = match fail {
        None => m.max(0.0),
        Some(_) => m.min(-f64::MIN_POSITIVE),
    };
    (fail, m.is_finite().then_some(m))
}

fn section_index(view: &EnergizedView<'_>, section_id: &str) -> Result<usize> {
    view.network()
        .section_idx(section_id)
        .ok_or_else(|| HcError::UnknownId {
            kind: "section",
            id: section_id.to_string(),
        })
}

/// HC of one section at one interval.
pub fn hc_at<T: Scalar>(
    engine: &HcEngine<'_, T>,
    section_id: &str,
    key: IntervalKey,
    model: &dyn LoadModel,
    kind: HcKind,
) -> Result<HcEntry> {
    let s = section_index(engine.view(), section_id)?;
    let prep = engine.prepare(key, model.node_loads(key)?)?;
    engine.search(&prep, s, kind)
}

/// HC of one section over the full 576-interval grid.
pub fn hc_profile<T: Scalar>(
    engine: &HcEngine<'_, T>,
    section_id: &str,
    model: &dyn LoadModel,
    kind: HcKind,
) -> Result<HcResult> {
    let s = section_index(engine.view(), section_id)?;
    let keys: Vec<_> = IntervalKey::grid().collect();
    Ok(engine.sweep(&[s], model, kind, &keys)?.remove(0))
}

/// Flat-mode HC: a single percentile interval chosen by the load model.
pub fn hc_flat<T: Scalar>(
    engine: &HcEngine<'_, T>,
    sections: &[usize],
    model: &dyn LoadModel,
    kind: HcKind,
) -> Result<Vec<HcResult>> {
    let key = model.flat_key(kind)?;
    engine.sweep(sections, model, kind, &[key])
}

/// kWh per year above the flat value; only grid entries count.
pub fn lost_der_opportunity(result: &HcResult) -> f64 {
    result
        .profile
        .iter()
        .filter_map(|(k, e)| k.as_grid().map(|i| (e.kw - result.flat_kw) * i.weight_hours()))
        .sum()
}

/// Count of flat binding limits across results.
pub fn limiting_distribution<'a>(results: impl IntoIterator<Item = &'a HcResult>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in results {
        *counts.entry(r.flat_limit.label().to_string()).or_insert(0) += 1;
    }
    counts
}
