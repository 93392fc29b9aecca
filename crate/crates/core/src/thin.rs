//! Thin-spectrum construction: gap covers, assembly of the thin word, the
//! measure-decay experiment and the inductive stages.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gap::{exceptional_set, open_gap, open_gap_with, GapFilter, DEFAULT_DEPTH_CAP};
use crate::spectrum::{band_edges, lyapunov, measure_in_window, BandSet, EnergyWindow, Interval};
use crate::transfer::EnergyGrid;
use crate::words::{lcm, word_distance, FamilySpec, Word, DEFAULT_LCM_CAP};

/// Default cap on the letter count of a stage word.
pub const DEFAULT_WORD_CAP: usize = 100_000;

/// Bounds on the common period tried in turn by [`build_gap_cover`] before
/// falling back to an unrestricted cover.
const PERIOD_BOUNDS: [usize; 10] = [1, 2, 4, 6, 12, 24, 60, 120, 360, 720];

/// A resolvent interval of a cover member at one coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveredGap {
    pub lambda: f64,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverMember {
    /// Word as returned by the gap search.
    pub base: Word,
    /// `base` lifted to the common period, `base^{♯(t/k)}`.
    pub word: Word,
    /// Letters of `base` divided by the letters of `a`.
    pub k: usize,
    pub gaps: Vec<CoveredGap>,
}

/// Finite family of words whose gaps cover a window for every coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCover {
    pub members: Vec<CoverMember>,
    /// Common period multiplier: every lifted member has `t·p` letters.
    pub t: usize,
    /// Letters of the base word `a`.
    pub p: usize,
    pub couplings: Vec<f64>,
    pub window: EnergyWindow,
}

impl GapCover {
    pub fn m(&self) -> usize {
        self.members.len()
    }

    /// Smallest admissible `N` for assembly.
    pub fn min_n(&self) -> usize {
        self.m() * self.t
    }
}

/// Tuning knobs of [`build_gap_cover`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverOptions {
    pub grid_step: f64,
    pub depth_cap: usize,
    /// Extra gap searches allowed at uncovered points.
    pub max_repairs: usize,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions {
            grid_step: 0.05,
            depth_cap: DEFAULT_DEPTH_CAP,
            max_repairs: 2000,
        }
    }
}

/// Open components of `R \ σ` meeting the hull of `k`, clipped a little
/// outside of it.
fn resolvent_pieces(bands: &BandSet, hull: Interval) -> Vec<Interval> {
    let pad = 1.0 + hull.len();
    let (lo, hi) = (hull.lo - pad, hull.hi + pad);
    let mut out = Vec::new();
    let mut left = lo;
    for b in bands.bands() {
        if b.lo > left {
            out.push(Interval::new(left, b.lo.min(hi)));
        }
        left = left.max(b.hi);
        if left >= hi {
            break;
        }
    }
    if left < hi {
        out.push(Interval::new(left, hi));
    }
    out.retain(|iv| iv.hi > hull.lo && iv.lo < hull.hi);
    out
}

/// Greedy cover of `k` by open intervals. `Ok` holds positions in `pieces`
/// of the chosen intervals, `Err` the first point no candidate covers.
fn greedy_open_cover(k: &EnergyWindow, pieces: &[(usize, Interval)]) -> std::result::Result<Vec<usize>, f64> {
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by(|&a, &b| pieces[a].1.lo.total_cmp(&pieces[b].1.lo));
    let mut chosen = Vec::new();
    for iv in k.intervals() {
        let mut f = iv.lo;
        loop {
            let best = order
                .iter()
                .take_while(|&&i| pieces[i].1.lo < f)
                .filter(|&&i| pieces[i].1.hi > f)
                .max_by(|&&a, &&b| pieces[a].1.hi.total_cmp(&pieces[b].1.hi));
            match best {
                None => return Err(f),
                Some(&i) => {
                    chosen.push(i);
                    if pieces[i].1.hi > iv.hi {
                        break;
                    }
                    f = pieces[i].1.hi;
                }
            }
        }
    }
    chosen.sort_unstable();
    chosen.dedup();
    Ok(chosen)
}

fn word_key(w: &Word) -> Vec<u64> {
    w.values().iter().map(|v| v.to_bits()).collect()
}

struct Candidate {
    word: Word,
    pieces: Vec<Vec<Interval>>,
}

/// Builds a finite family of `ε`-perturbations of `a` whose spectral gaps
/// cover `K` for every coupling, lifted to a common period.
pub fn build_gap_cover(
    a: &Word,
    k: &EnergyWindow,
    eps: f64,
    couplings: &[f64],
    family: &FamilySpec,
    opts: &CoverOptions,
) -> Result<GapCover> {
    family.check_word(a)?;
    if couplings.is_empty() {
        return Err(Error::InvalidArgument("coupling grid is empty".into()));
    }
    if k.is_empty() {
        return Err(Error::WindowEmpty("window has no intervals".into()));
    }
    let families: Vec<FamilySpec> = couplings.iter().map(|&l| family.with_coupling(l)).collect();
    for f in &families {
        f.validate()?;
        let s = exceptional_set(f)?;
        for &r in &s.roots {
            let d = k.distance(r);
            if d <= opts.grid_step {
                return Err(Error::ExceptionalEnergy {
                    energy: r,
                    distance: d,
                });
            }
        }
    }
    let hull = k.hull().expect("nonempty window");
    let grid = EnergyGrid::over_window(k, opts.grid_step)?;

    let jobs: Vec<(f64, usize)> = grid
        .points()
        .iter()
        .flat_map(|&e| (0..families.len()).map(move |i| (e, i)))
        .collect();
    let found: Vec<Option<Word>> = jobs
        .par_iter()
        .map(|&(e, i)| open_gap(a, e, eps, &families[i], opts.depth_cap).ok().map(|c| c.word))
        .collect();

    let mut cands: Vec<Candidate> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let add = |w: Word, cands: &mut Vec<Candidate>, index: &mut HashMap<Vec<u64>, usize>| {
        let key = word_key(&w);
        if index.contains_key(&key) {
            return;
        }
        let pieces = couplings
            .iter()
            .map(|&l| resolvent_pieces(&band_edges(&w, l), hull))
            .collect();
        index.insert(key, cands.len());
        cands.push(Candidate { word: w, pieces });
    };
    for w in found.into_iter().flatten() {
        add(w, &mut cands, &mut index);
    }

    // smallest common period first; repairs only look for words whose
    // length divides the current bound
    let mut chosen_by_lambda: Option<Vec<Vec<(usize, Interval)>>> = None;
    let mut last_gap = hull.lo;
    let mut repairs = 0;
    'periods: for bound in PERIOD_BOUNDS.iter().copied().map(Some).chain([None]) {
        let fits = |k: usize| bound.map_or(true, |b| b % k == 0);
        'attempt: loop {
            let mut sel_all = Vec::with_capacity(couplings.len());
            for li in 0..couplings.len() {
                let pieces: Vec<(usize, Interval)> = cands
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| fits(c.word.len() / a.len()))
                    .flat_map(|(ci, c)| c.pieces[li].iter().map(move |&iv| (ci, iv)))
                    .collect();
                match greedy_open_cover(k, &pieces) {
                    Ok(sel) => sel_all.push(sel.into_iter().map(|i| pieces[i]).collect()),
                    Err(f) => {
                        last_gap = f;
                        repairs += 1;
                        if repairs > opts.max_repairs {
                            break 'periods;
                        }
                        // the new word must be new and have `f` strictly
                        // inside a gap by the same band computation
                        let lambda = couplings[li];
                        let fresh = |w: &Word| {
                            !index.contains_key(&word_key(w))
                                && resolvent_pieces(&band_edges(w, lambda), hull)
                                    .iter()
                                    .any(|iv| iv.lo < f && f < iv.hi)
                        };
                        let filter = GapFilter {
                            length: &fits,
                            word: &fresh,
                        };
                        let found = open_gap_with(a, f, eps, &families[li], opts.depth_cap, &filter);
                        let Ok(c) = found else { continue 'periods };
                        let before = cands.len();
                        add(c.word, &mut cands, &mut index);
                        if cands.len() == before {
                            continue 'periods;
                        }
                        continue 'attempt;
                    }
                }
            }
            chosen_by_lambda = Some(sel_all);
            break 'periods;
        }
    }
    let chosen_by_lambda = chosen_by_lambda.ok_or(Error::CoverageFailure {
        left: last_gap,
        right: last_gap + opts.grid_step,
    })?;

    let mut member_of: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<CoverMember> = Vec::new();
    let p = a.len();
    for (li, sel) in chosen_by_lambda.iter().enumerate() {
        for &(ci, iv) in sel {
            let mi = *member_of.entry(ci).or_insert_with(|| {
                let base = cands[ci].word.clone();
                let k = base.len() / p;
                members.push(CoverMember {
                    word: base.clone(),
                    base,
                    k,
                    gaps: Vec::new(),
                });
                members.len() - 1
            });
            members[mi].gaps.push(CoveredGap {
                lambda: couplings[li],
                interval: iv,
            });
        }
    }
    let mut t = 1usize;
    for m in &members {
        debug_assert_eq!(m.base.len() % p, 0);
        t = lcm(t, m.k)
            .filter(|&t| t <= DEFAULT_LCM_CAP)
            .ok_or(Error::LcmOverflow {
                cap: DEFAULT_LCM_CAP,
            })?;
    }
    for m in &mut members {
        m.word = m.base.sharp_power(t / m.k)?;
    }
    Ok(GapCover {
        members,
        t,
        p,
        couplings: couplings.to_vec(),
        window: k.clone(),
    })
}

/// `u` maximal with `m·t·u ≤ N`.
pub fn max_u(cover: &GapCover, n: usize) -> Result<usize> {
    let mt = cover.min_n();
    if mt == 0 || n < mt {
        return Err(Error::NTooSmall { n, min: mt });
    }
    Ok(n / mt)
}

/// `c_1^{♯u} ⋯ c_m^{♯u} a^{♯(N - mtu)}`.
pub fn assemble_thin_word(cover: &GapCover, a: &Word, n: usize) -> Result<Word> {
    if a.len() != cover.p {
        return Err(Error::InvalidArgument("base word does not match the cover".into()));
    }
    let u = max_u(cover, n)?;
    let mut data = Vec::with_capacity(n * a.aggregated_len());
    for m in &cover.members {
        for _ in 0..u {
            data.extend_from_slice(m.word.values());
        }
    }
    for _ in 0..n - cover.min_n() * u {
        data.extend_from_slice(a.values());
    }
    Word::from_aggregate(a.block_size(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaMeasure {
    pub lambda: f64,
    pub measure: f64,
}

/// One row of the decay experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinTrace {
    #[serde(rename = "N")]
    pub n: usize,
    pub u: usize,
    /// Length of the aggregated potential, `N·p·k`.
    pub word_length: usize,
    pub measure_by_lambda: Vec<LambdaMeasure>,
    pub l_min_estimate: f64,
    pub fitted_c0: Option<f64>,
}

/// Output of [`decay_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub traces: Vec<ThinTrace>,
    /// Per-coupling decay rates `-d log(measure)/dN`.
    pub c0_by_lambda: Vec<Option<f64>>,
    /// Smallest rate over the coupling grid.
    pub c0: Option<f64>,
    pub l_min_estimate: f64,
    /// `½·k·p·t·L_min`, reported for comparison with `c0`.
    pub c0_reference: f64,
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// `min` over a 64-point grid of `K × Z` of the largest member Lyapunov
/// exponent.
pub fn l_min_estimate(cover: &GapCover, k: &EnergyWindow, couplings: &[f64]) -> f64 {
    let Some(h) = k.hull() else { return 0.0 };
    let per = (64 / couplings.len().max(1)).max(1);
    let mut pts = Vec::new();
    for i in 0..per {
        let e = h.lo + h.len() * (i as f64 + 0.5) / per as f64;
        let e = if k.contains(e) { e } else { nearest_point(k, e) };
        for &l in couplings {
            pts.push((e, l));
        }
    }
    pts.par_iter()
        .map(|&(e, l)| {
            cover
                .members
                .iter()
                .map(|m| lyapunov(&m.base, e, l))
                .fold(0.0, f64::max)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn nearest_point(k: &EnergyWindow, e: f64) -> f64 {
    k.intervals()
        .iter()
        .map(|iv| e.clamp(iv.lo, iv.hi))
        .min_by(|a, b| (a - e).abs().total_cmp(&(b - e).abs()))
        .unwrap_or(e)
}

/// Assembles the thin word for each `N` and records `Leb(K ∩ σ(H_{λy}))`.
pub fn decay_experiment(
    cover: &GapCover,
    a: &Word,
    k: &EnergyWindow,
    n_list: &[usize],
    couplings: &[f64],
) -> Result<DecayReport> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("N list must be increasing".into()));
    }
    for &n in n_list {
        max_u(cover, n)?;
    }
    let words: Vec<Word> = n_list
        .iter()
        .map(|&n| assemble_thin_word(cover, a, n))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..n_list.len())
        .flat_map(|i| (0..couplings.len()).map(move |j| (i, j)))
        .collect();
    let meas: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j)| measure_in_window(&band_edges(&words[i], couplings[j]), k))
        .collect();
    let measure = |i: usize, j: usize| meas[i * couplings.len() + j];

    let c0_by_lambda: Vec<Option<f64>> = (0..couplings.len())
        .map(|j| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n_list.len())
                .filter(|&i| measure(i, j) > 0.0)
                .map(|i| (n_list[i] as f64, measure(i, j).ln()))
                .unzip();
            ls_slope(&xs, &ys).map(|s| -s)
        })
        .collect();
    let c0 = c0_by_lambda
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .and_then(|v| v.into_iter().reduce(f64::min));
    let l_min = l_min_estimate(cover, k, couplings);
    let traces = n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| ThinTrace {
            n,
            u: n / cover.min_n(),
            word_length: words[i].aggregated_len(),
            measure_by_lambda: couplings
                .iter()
                .enumerate()
                .map(|(j, &lambda)| LambdaMeasure {
                    lambda,
                    measure: measure(i, j),
                })
                .collect(),
            l_min_estimate: l_min,
            fitted_c0: c0,
        })
        .collect();
    Ok(DecayReport {
        traces,
        c0_by_lambda,
        c0,
        l_min_estimate: l_min,
        c0_reference: 0.5 * (a.block_size() * cover.p * cover.t) as f64 * l_min,
    })
}

/// CSV `N,u,lambda,measure`, one row per `(N, λ)`.
pub fn traces_to_csv(traces: &[ThinTrace]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["N", "u", "lambda", "measure"]).unwrap();
    for t in traces {
        for lm in &t.measure_by_lambda {
            w.write_record([
                t.n.to_string(),
                t.u.to_string(),
                lm.lambda.to_string(),
                lm.measure.to_string(),
            ])
            .unwrap();
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Parses rows written by [`traces_to_csv`] as `(N, u, λ, measure)`.
pub fn traces_from_csv(text: &str) -> Result<Vec<(usize, usize, f64, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let bad = |e: String| Error::Parse(e);
        out.push((
            rec[0].parse().map_err(|e| bad(format!("{e}")))?,
            rec[1].parse().map_err(|e| bad(format!("{e}")))?,
            rec[2].parse().map_err(|e| bad(format!("{e}")))?,
            rec[3].parse().map_err(|e| bad(format!("{e}")))?,
        ));
    }
    Ok(out)
}

/// One stage of the inductive construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub stage: usize,
    pub word: Word,
    pub eps: f64,
    pub eta: f64,
    /// Period of the stage word in letters.
    pub p: usize,
    pub window: EnergyWindow,
    /// `Leb(F_ℓ ∩ σ(H_{λ x_ℓ}))` per coupling.
    pub measures: Vec<LambdaMeasure>,
    /// `exp(-√p)`; stage 0 has no target.
    pub target: Option<f64>,
    /// Multiplier with `p_ℓ = N·p_{ℓ-1}`, absent at stage 0.
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub cover_size: Option<usize>,
    pub cover_period: Option<usize>,
    pub distance_to_previous: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOptions {
    pub cover: CoverOptions,
    pub word_cap: usize,
    /// How many times `N` may be doubled past `m·t`.
    pub max_doublings: usize,
    /// `ε_ℓ` is this fraction of the admissible bound.
    pub eps_fraction: f64,
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions {
            cover: CoverOptions::default(),
            word_cap: DEFAULT_WORD_CAP,
            max_doublings: 20,
            eps_fraction: 0.9,
        }
    }
}

/// `[-1/η, 1/η]` without the open `η`-balls around the exceptional energies.
pub fn stage_window(eta: f64, family: &FamilySpec, couplings: &[f64]) -> Result<EnergyWindow> {
    let mut s = Vec::new();
    for &l in couplings {
        s.extend(exceptional_set(&family.with_coupling(l))?.roots);
    }
    Ok(EnergyWindow::single(-1.0 / eta, 1.0 / eta)?.minus_balls(&s, eta))
}

fn stage_measures(x: &Word, f: &EnergyWindow, couplings: &[f64]) -> Vec<LambdaMeasure> {
    couplings
        .par_iter()
        .map(|&lambda| LambdaMeasure {
            lambda,
            measure: measure_in_window(&band_edges(x, lambda), f),
        })
        .collect()
}

/// Right-hand side of the `ε_ℓ` condition given the previous stage.
pub fn eps_bound(prev: &StageState) -> f64 {
    let min_meas = prev
        .measures
        .iter()
        .map(|m| m.measure)
        .fold(f64::INFINITY, f64::min);
    0.5 * prev.eps.min(0.25 * min_meas)
}

/// Runs `stages` rounds of gap cover, assembly and `N` search.
pub fn run_stages(
    x0: &Word,
    eps0: f64,
    stages: usize,
    family: &FamilySpec,
    couplings: &[f64],
    eta0: f64,
    opts: &StageOptions,
) -> Result<Vec<StageState>> {
    family.check_word(x0)?;
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::InvalidArgument("eps0 must lie in (0, 1)".into()));
    }
    if !(eta0 > 0.0) {
        return Err(Error::InvalidArgument("eta0 must be positive".into()));
    }
    if couplings.is_empty() {
        return Err(Error::InvalidArgument("coupling grid is empty".into()));
    }
    let f0 = stage_window(eta0, family, couplings)?;
    let m0 = stage_measures(x0, &f0, couplings);
    if f0.is_empty() || m0.iter().any(|m| m.measure <= 0.0) {
        return Err(Error::WindowEmpty(format!(
            "F_0 for eta0 = {eta0} misses the spectrum"
        )));
    }
    let mut out = vec![StageState {
        stage: 0,
        word: x0.clone(),
        eps: eps0,
        eta: eta0,
        p: x0.len(),
        window: f0,
        measures: m0,
        target: None,
        n: None,
        cover_size: None,
        cover_period: None,
        distance_to_previous: None,
    }];
    for stage in 1..=stages {
        let prev = out.last().unwrap();
        let eps = opts.eps_fraction * eps_bound(prev);
        let eta = prev.eta / 2.0;
        let window = stage_window(eta, family, couplings)?;
        let mut copts = opts.cover;
        copts.grid_step = copts.grid_step.min(eta / 2.0);
        let cover = build_gap_cover(&prev.word, &window, eps, couplings, family, &copts)?;
        let mut n = cover.min_n();
        let mut accepted = None;
        for _ in 0..=opts.max_doublings {
            let len = n * prev.p;
            if len > opts.word_cap {
                return Err(Error::StageBudgetExceeded {
                    stage,
                    length: len,
                    cap: opts.word_cap,
                });
            }
            let word = assemble_thin_word(&cover, &prev.word, n)?;
            let measures = stage_measures(&word, &window, couplings);
            let target = (-(len as f64).sqrt()).exp();
            if measures.iter().all(|m| m.measure < target && m.measure > 0.0) {
                accepted = Some((word, measures, target));
                break;
            }
            n *= 2;
        }
        let Some((word, measures, target)) = accepted else {
            return Err(Error::StageBudgetExceeded {
                stage,
                length: n * prev.p,
                cap: opts.word_cap,
            });
        };
        let distance = word_distance(&prev.word, &word)?;
        let p = word.len();
        out.push(StageState {
            stage,
            word,
            eps,
            eta,
            p,
            window,
            measures,
            target: Some(target),
            n: Some(p / prev.p),
            cover_size: Some(cover.m()),
            cover_period: Some(cover.t),
            distance_to_previous: Some(distance),
        });
    }
    Ok(out)
}

/// Violations of the stage inequalities, empty if all hold.
pub fn check_stages(states: &[StageState]) -> Vec<String> {
    let mut bad = Vec::new();
    for w in states.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let l = cur.stage;
        let bound = eps_bound(prev);
        if !(cur.eps < bound) {
            bad.push(format!("stage {l}: eps {} not below {}", cur.eps, bound));
        }
        match word_distance(&cur.word, &prev.word) {
            Ok(d) if d < cur.eps => {}
            Ok(d) => bad.push(format!("stage {l}: distance {d} not below eps {}", cur.eps)),
            Err(e) => bad.push(format!("stage {l}: {e}")),
        }
        let target = (-(cur.p as f64).sqrt()).exp();
        for m in &cur.measures {
            if !(m.measure < target) {
                bad.push(format!(
                    "stage {l}, lambda {}: measure {} not below {}",
                    m.lambda, m.measure, target
                ));
            }
        }
        if cur.p % prev.p != 0 {
            bad.push(format!("stage {l}: period {} not a multiple of {}", cur.p, prev.p));
        }
    }
    bad
}
