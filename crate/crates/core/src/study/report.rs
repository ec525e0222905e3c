//! Comparison reports rendered from a bundle. Each is a pure function of the
//! bundle contents and `ReportOptions`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use std::str::FromStr;

use super::bundle::{self, Bundle, FlatRow, SectionRow};
use super::svg;
use crate::error::{HcError, Result};
use crate::hosting_capacity::{DayType, HcKind, IntervalKey};
use crate::reconfiguration::{CENSUS_BIN_KW, MIN_OVER_CONFIGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Distance,
    Limits,
    Diff,
    LoadCensus,
    Profile,
}

impl ReportKind {
    pub const ALL: [ReportKind; 5] = [
        ReportKind::Distance,
        ReportKind::Limits,
        ReportKind::Diff,
        ReportKind::LoadCensus,
        ReportKind::Profile,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ReportKind::Distance => "distance",
            ReportKind::Limits => "limits",
            ReportKind::Diff => "diff",
            ReportKind::LoadCensus => "load_census",
            ReportKind::Profile => "profile",
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ReportKind {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| HcError::InvalidArgument(format!("unknown report kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    /// HC kind; each report has its own default.
    pub hc_kind: Option<HcKind>,
    /// Restricts distance, limits, load_census and profile to one regime.
    pub regime: Option<String>,
    /// Configuration for single-configuration reports.
    pub config: String,
    pub regime_a: String,
    pub regime_b: String,
    /// Configuration of side b in `diff`; `None` takes the minimum over all.
    pub config_b: Option<String>,
    pub bucket_miles: f64,
    /// Profile of one section instead of the section mean.
    pub section: Option<String>,
    /// Displayed hours `[start, end]` of the profile plot.
    pub window: (u8, u8),
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            hc_kind: None,
            regime: None,
            config: "base".into(),
            regime_a: "opflex".into(),
            regime_b: "transfer".into(),
            config_b: None,
            bucket_miles: 0.5,
            section: None,
            window: (6, 18),
        }
    }
}

/// Rendered tables and plot, by file name.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: ReportKind,
    /// (file name, contents); the first entry is the main CSV.
    pub tables: Vec<(String, String)>,
    pub svg: String,
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn num(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

/// Regimes of cells matching `kind` and `config`, in cell order.
fn regimes_in(b: &Bundle, kind: HcKind, config: Option<&str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    b.manifest
        .cells
        .iter()
        .filter(|c| c.kind == kind && config.is_none_or(|x| c.config == x))
        .filter(|c| seen.insert(c.regime.clone()))
        .map(|c| c.regime.clone())
        .collect()
}

fn pick_regimes(b: &Bundle, o: &ReportOptions, kind: HcKind, config: Option<&str>) -> Result<Vec<String>> {
    let regimes = match &o.regime {
        Some(r) => vec![r.clone()],
        None => regimes_in(b, kind, config),
    };
    if regimes.is_empty() {
        return Err(HcError::MissingCell {
            regime: o.regime.clone().unwrap_or_else(|| "any".into()),
            config: config.unwrap_or("any").into(),
            scenario: b.scenarios().first().cloned().unwrap_or_else(|| "any".into()),
        });
    }
    Ok(regimes)
}

fn scenarios_or_missing(b: &Bundle, regime: &str, config: &str) -> Result<Vec<String>> {
    let s = b.scenarios();
    if s.is_empty() {
        return Err(HcError::MissingCell {
            regime: regime.into(),
            config: config.into(),
            scenario: "any".into(),
        });
    }
    Ok(s)
}

fn flat_of<'a>(flat: &'a [FlatRow], regime: &str, config: &str, scenario: &str, kind: HcKind) -> Vec<&'a FlatRow> {
    flat.iter()
        .filter(|r| r.regime == regime && r.config == config && r.scenario == scenario && r.kind == kind)
        .collect()
}

pub fn render_report(b: &Bundle, kind: ReportKind, o: &ReportOptions) -> Result<Report> {
    match kind {
        ReportKind::Distance => distance(b, o),
        ReportKind::Limits => limits(b, o),
        ReportKind::Diff => diff(b, o),
        ReportKind::LoadCensus => load_census(b, o),
        ReportKind::Profile => profile(b, o),
    }
}

/// Writes `reports/<kind>.*` into the bundle and records them in the manifest.
pub fn write_report(b: &mut Bundle, kind: ReportKind, o: &ReportOptions) -> Result<Vec<String>> {
    let report = render_report(b, kind, o)?;
    std::fs::create_dir_all(b.dir.join("reports"))?;
    let mut written = Vec::new();
    for (name, text) in &report.tables {
        let rel = format!("reports/{name}");
        std::fs::write(b.dir.join(&rel), text)?;
        written.push(rel);
    }
    let rel = format!("reports/{}.svg", kind.label());
    std::fs::write(b.dir.join(&rel), &report.svg)?;
    written.push(rel);
    bundle::record_files(&b.dir, &mut b.manifest, &written)?;
    bundle::write_manifest(&b.dir, &b.manifest)?;
    Ok(written)
}

fn distance(b: &Bundle, o: &ReportOptions) -> Result<Report> {
    if !(o.bucket_miles > 0.0) {
        return Err(HcError::InvalidArgument("bucket width must be positive".into()));
    }
    let kind = o.hc_kind.unwrap_or(HcKind::Generation);
    let regimes = pick_regimes(b, o, kind, Some(&o.config))?;
    let scenarios = scenarios_or_missing(b, &regimes[0], &o.config)?;
    for r in &regimes {
        for s in &scenarios {
            b.require(r, &o.config, s, kind)?;
        }
    }
    let flat = b.flat()?;
    let sections: BTreeMap<String, SectionRow> =
        b.sections()?.into_iter().map(|s| (s.section_id.clone(), s)).collect();
    // (regime idx, scenario idx, phase class, bucket) -> (count, sum)
    let mut agg: BTreeMap<(usize, usize, String, u64), (usize, f64)> = BTreeMap::new();
    for (ri, r) in regimes.iter().enumerate() {
        for (si, s) in scenarios.iter().enumerate() {
            for row in flat_of(&flat, r, &o.config, s, kind) {
                let Some(sec) = sections.get(&row.section_id) else { continue };
                let bucket = (sec.distance_mi / o.bucket_miles).floor() as u64;
                let e = agg.entry((ri, si, sec.phase_class.clone(), bucket)).or_default();
                e.0 += 1;
                e.1 += row.hc_kw;
            }
        }
    }
    let rows = agg.iter().map(|((ri, si, pc, k), (n, sum))| {
        vec![
            regimes[*ri].clone(),
            scenarios[*si].clone(),
            pc.clone(),
            num(*k as f64 * o.bucket_miles),
            num((*k + 1) as f64 * o.bucket_miles),
            n.to_string(),
            num(*sum),
            num(sum / *n as f64),
        ]
    });
    let csv = csv_text(
        &["regime", "scenario", "phase_class", "bucket_start_mi", "bucket_end_mi", "sections", "hc_sum_kw", "hc_mean_kw"],
        rows,
    );
    let max_bucket = agg.keys().map(|k| k.3).max().unwrap_or(0);
    let x: Vec<String> = (0..=max_bucket).map(|k| num(k as f64 * o.bucket_miles)).collect();
    let mut series = Vec::new();
    for (ri, r) in regimes.iter().enumerate() {
        for pc in ["three_phase", "one_two_phase"] {
            let v: Vec<f64> = (0..=max_bucket)
                .map(|k| agg.get(&(ri, 0, pc.to_string(), k)).map_or(0.0, |e| e.1))
                .collect();
            series.push((format!("{r} {pc}"), v));
        }
    }
    let svg = svg::line_chart(
        &format!("Aggregate {kind} HC by distance ({}, {})", o.config, scenarios[0]),
        "HC sum (kW)",
        &x,
        &series,
    );
    Ok(Report {
        kind: ReportKind::Distance,
        tables: vec![("distance.csv".into(), csv)],
        svg,
    })
}

fn limits(b: &Bundle, o: &ReportOptions) -> Result<Report> {
    let kind = o.hc_kind.unwrap_or(HcKind::Generation);
    let regimes = pick_regimes(b, o, kind, None)?;
    let cells: Vec<_> = b
        .manifest
        .cells
        .iter()
        .filter(|c| c.kind == kind && regimes.contains(&c.regime))
        .cloned()
        .collect();
    if let Some(r) = &o.regime {
        let s = scenarios_or_missing(b, r, &o.config)?;
        b.require(r, &o.config, &s[0], kind)?;
    }
    let flat = b.flat()?;
    let mut rows = Vec::new();
    let mut first: BTreeMap<String, usize> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for row in flat_of(&flat, &c.regime, &c.config, &c.scenario, kind) {
            *counts.entry(row.binding_criterion.clone()).or_default() += 1;
        }
        for (label, n) in &counts {
            rows.push(vec![
                c.regime.clone(),
                c.config.clone(),
                c.scenario.clone(),
                label.clone(),
                n.to_string(),
            ]);
        }
        if i == 0 {
            first = counts;
        }
    }
    let csv = csv_text(&["regime", "config", "scenario", "binding_criterion", "sections"], rows);
    let title = cells
        .first()
        .map(|c| format!("Binding {kind} limits ({}, {}, {})", c.regime, c.config, c.scenario))
        .unwrap_or_default();
    let bars: Vec<(String, f64)> = first.into_iter().map(|(k, v)| (k, v as f64)).collect();
    Ok(Report {
        kind: ReportKind::Limits,
        tables: vec![("limits.csv".into(), csv)],
        svg: svg::bar_chart(&title, "sections", &bars),
    })
}

fn diff(b: &Bundle, o: &ReportOptions) -> Result<Report> {
    let kind = o.hc_kind.unwrap_or(HcKind::Generation);
    let scenarios = scenarios_or_missing(b, &o.regime_a, &o.config)?;
    let configs_b: Vec<String> = match &o.config_b {
        Some(c) => vec![c.clone()],
        None => b.configs(),
    };
    for s in &scenarios {
        b.require(&o.regime_a, &o.config, s, kind)?;
        for c in &configs_b {
            b.require(&o.regime_b, c, s, kind)?;
        }
    }
    let flat = b.flat()?;
    let sections: BTreeMap<String, SectionRow> =
        b.sections()?.into_iter().map(|s| (s.section_id.clone(), s)).collect();
    let mut rows = Vec::new();
    // group label -> (sum, positive, negative)
    let mut groups: BTreeMap<(String, String), (f64, usize, usize)> = BTreeMap::new();
    let mut bars: BTreeMap<String, f64> = BTreeMap::new();
    for s in &scenarios {
        let mut side_b: BTreeMap<&str, f64> = BTreeMap::new();
        for c in &configs_b {
            for row in flat_of(&flat, &o.regime_b, c, s, kind) {
                let e = side_b.entry(row.section_id.as_str()).or_insert(f64::INFINITY);
                *e = e.min(row.hc_kw);
            }
        }
        for a in flat_of(&flat, &o.regime_a, &o.config, s, kind) {
            let Some(&hb) = side_b.get(a.section_id.as_str()) else {
                return Err(HcError::MismatchedSections(vec![format!("{} ({s})", a.section_id)]));
            };
            let d = a.hc_kw - hb;
            let (feeder, pc) = sections
                .get(&a.section_id)
                .map(|x| (x.feeder_id.clone(), x.phase_class.clone()))
                .unwrap_or_default();
            for g in [
                ("feeder".to_string(), feeder.clone()),
                ("phase_class".to_string(), pc.clone()),
                ("scenario".to_string(), s.clone()),
            ] {
                let e = groups.entry(g).or_default();
                e.0 += d;
                e.1 += usize::from(d > 0.0);
                e.2 += usize::from(d < 0.0);
            }
            *bars.entry(format!("{s} {feeder} {pc}")).or_default() += d;
            rows.push(vec![
                s.clone(),
                a.section_id.clone(),
                feeder,
                pc,
                num(a.hc_kw),
                num(hb),
                num(d),
            ]);
        }
    }
    let csv = csv_text(
        &["scenario", "section_id", "feeder_id", "phase_class", "hc_a_kw", "hc_b_kw", "diff_kw"],
        rows,
    );
    let summary = csv_text(
        &["group", "value", "diff_sum_kw", "positive", "negative"],
        groups.iter().map(|((g, v), (sum, p, n))| {
            vec![g.clone(), v.clone(), num(*sum), p.to_string(), n.to_string()]
        }),
    );
    let side_b = o.config_b.clone().unwrap_or_else(|| MIN_OVER_CONFIGS.to_string());
    let svg = svg::bar_chart(
        &format!(
            "Aggregate {kind} HC difference: {}@{} minus {}@{}",
            o.regime_a, o.config, o.regime_b, side_b
        ),
        "diff (kW)",
        &bars.into_iter().collect::<Vec<_>>(),
    );
    Ok(Report {
        kind: ReportKind::Diff,
        tables: vec![("diff.csv".into(), csv), ("diff_summary.csv".into(), summary)],
        svg,
    })
}

fn load_census(b: &Bundle, o: &ReportOptions) -> Result<Report> {
    let kind = o.hc_kind.unwrap_or(HcKind::Load);
    let regime = match &o.regime {
        Some(r) => r.clone(),
        None => {
            let all = regimes_in(b, kind, None);
            if all.iter().any(|r| r == "transfer") {
                "transfer".into()
            } else {
                pick_regimes(b, o, kind, None)?.remove(0)
            }
        }
    };
    let scenarios = scenarios_or_missing(b, &regime, &o.config)?;
    let configs = b.configs();
    for s in &scenarios {
        for c in &configs {
            b.require(&regime, c, s, kind)?;
        }
    }
    let flat = b.flat()?;
    let mut rows = Vec::new();
    let mut hist_rows = Vec::new();
    let mut bars = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        for c in &configs {
            let cell = flat_of(&flat, &regime, c, s, kind);
            let zero = cell.iter().filter(|r| r.hc_kw <= 0.0).count();
            let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
            for r in &cell {
                *hist.entry((r.hc_kw / CENSUS_BIN_KW).floor() as u64).or_default() += 1;
            }
            rows.push(vec![regime.clone(), s.clone(), c.clone(), cell.len().to_string(), zero.to_string()]);
            for (bin, n) in hist {
                hist_rows.push(vec![
                    regime.clone(),
                    s.clone(),
                    c.clone(),
                    num(bin as f64 * CENSUS_BIN_KW),
                    num((bin + 1) as f64 * CENSUS_BIN_KW),
                    n.to_string(),
                ]);
            }
            if si == 0 {
                bars.push((c.clone(), zero as f64));
            }
        }
    }
    let csv = csv_text(&["regime", "scenario", "config", "sections", "zero_hc"], rows);
    let hist = csv_text(
        &["regime", "scenario", "config", "bin_start_kw", "bin_end_kw", "sections"],
        hist_rows,
    );
    Ok(Report {
        kind: ReportKind::LoadCensus,
        tables: vec![("load_census.csv".into(), csv), ("load_census_histogram.csv".into(), hist)],
        svg: svg::bar_chart(
            &format!("Sections with zero {kind} HC ({regime}, {})", scenarios[0]),
            "sections",
            &bars,
        ),
    })
}

fn profile(b: &Bundle, o: &ReportOptions) -> Result<Report> {
    let kind = o.hc_kind.unwrap_or(HcKind::Generation);
    if b.manifest.mode != super::StudyMode::Profile {
        return Err(HcError::Config("profile report needs a bundle run in profile mode".into()));
    }
    let regime = pick_regimes(b, o, kind, Some(&o.config))?.remove(0);
    let scenarios = scenarios_or_missing(b, &regime, &o.config)?;
    for s in &scenarios {
        b.require(&regime, &o.config, s, kind)?;
    }
    let (w0, w1) = o.window;
    // (scenario idx, grid ordinal) -> (sum, n)
    let mut agg: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    let index: BTreeMap<&str, usize> = scenarios.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    for row in b.results()? {
        if row.regime != regime || row.config != o.config || row.kind != kind {
            continue;
        }
        if o.section.as_ref().is_some_and(|s| *s != row.section_id) {
            continue;
        }
        let Some(&si) = index.get(row.scenario.as_str()) else { continue };
        let Some(i) = IntervalKey::from_str(&row.interval)?.as_grid() else { continue };
        let e = agg.entry((si, i.ordinal())).or_default();
        e.0 += row.hc_kw;
        e.1 += 1;
    }
    if agg.is_empty() {
        return Err(HcError::InvalidArgument(match &o.section {
            Some(s) => format!("no profile rows for section `{s}`"),
            None => "no profile rows in bundle".into(),
        }));
    }
    let value = |si: usize, ord: usize| agg.get(&(si, ord)).map(|(s, n)| s / *n as f64);
    let mut rows = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        for i in crate::hosting_capacity::IntervalIndex::all() {
            let Some(v) = value(si, i.ordinal()) else { continue };
            let shown = (w0..=w1).contains(&i.hour);
            rows.push(vec![
                regime.clone(),
                o.config.clone(),
                s.clone(),
                i.month.to_string(),
                i.day_type.code().to_string(),
                i.hour.to_string(),
                num(v),
                shown.to_string(),
            ]);
        }
    }
    let what = o.section.clone().unwrap_or_else(|| "mean".into());
    let csv = csv_text(
        &["regime", "config", "scenario", "month", "day_type", "hour", "hc_kw", "in_window"],
        rows,
    );
    let lost = csv_text(
        &["regime", "config", "scenario", "section_id", "flat_kw", "lost_kwh"],
        b.flat()?
            .into_iter()
            .filter(|r| r.regime == regime && r.config == o.config && r.kind == kind)
            .filter(|r| o.section.as_ref().is_none_or(|s| *s == r.section_id))
            .map(|r| vec![r.regime, r.config, r.scenario, r.section_id, num(r.hc_kw), num(r.lost_kwh)]),
    );
    let hours: Vec<u8> = (w0..=w1).collect();
    let x: Vec<String> = hours.iter().map(|h| format!("{h}:00")).collect();
    let series: Vec<(String, Vec<f64>)> = (1..=12u8)
        .map(|m| {
            let v = hours
                .iter()
                .map(|&h| {
                    crate::hosting_capacity::IntervalIndex::new(m, DayType::Weekday, h)
                        .ok()
                        .and_then(|i| value(0, i.ordinal()))
                        .unwrap_or(f64::NAN)
                })
                .collect();
            (format!("month {m}"), v)
        })
        .collect();
    let mut title = String::new();
    let _ = write!(title, "Weekday {kind} HC {w0}-{w1} h ({regime}, {}, {what}, {})", o.config, scenarios[0]);
    Ok(Report {
        kind: ReportKind::Profile,
        tables: vec![("profile.csv".into(), csv), ("profile_lost.csv".into(), lost)],
        svg: svg::line_chart(&title, "HC (kW)", &x, &series),
    })
}
