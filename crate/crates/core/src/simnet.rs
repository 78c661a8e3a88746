//! Multi-cell reservoir simulator of a pricing zone (PZ) with a bypass route.
//!
//! Each cell is a reservoir with a trapezoidal fundamental diagram. Trips
//! complete at a rate proportional to cell production. During unloading each
//! cell's completion rate is scaled towards its drain multiplier, so cells
//! empty unevenly and the spread of density is larger on the way down than on
//! the way up. Travellers choose between the PZ and the bypass with a binary
//! logit on generalized cost; the toll enters the PZ cost only.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::linalg::Cholesky;
use crate::stats::lognormal_factor;
use crate::{Result, Rng, TollVector};
use rand::SeedableRng;

/// Trapezoidal flow-density relation of one cell, per lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalDiagram {
    /// km/h
    pub free_flow_speed: f64,
    /// Density where the capacity plateau starts (veh/km/lane).
    pub critical_density: f64,
    /// Density where the capacity plateau ends (veh/km/lane).
    pub plateau_end: f64,
    /// veh/km/lane
    pub jam_density: f64,
}

impl FundamentalDiagram {
    /// veh/h/lane
    pub fn capacity(&self) -> f64 {
        self.free_flow_speed * self.critical_density
    }

    /// Flow (veh/h/lane) at density `k`.
    pub fn flow(&self, k: f64) -> f64 {
        if k <= 0.0 {
            0.0
        } else if k <= self.critical_density {
            self.free_flow_speed * k
        } else if k <= self.plateau_end {
            self.capacity()
        } else if k < self.jam_density {
            self.capacity() * (self.jam_density - k) / (self.jam_density - self.plateau_end)
        } else {
            0.0
        }
    }

    /// Fraction of the entry capacity available at density `k`: one up to the
    /// plateau end, then linearly down to zero at jam.
    pub fn entry_fraction(&self, k: f64) -> f64 {
        if k <= self.plateau_end {
            1.0
        } else if k < self.jam_density {
            (self.jam_density - k) / (self.jam_density - self.plateau_end)
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.free_flow_speed > 0.0
            && self.critical_density > 0.0
            && self.critical_density <= self.plateau_end
            && self.plateau_end < self.jam_density
            && self.jam_density.is_finite();
        if ok {
            Ok(())
        } else {
            Err(invalid(
                "fundamental diagram needs free_flow_speed > 0 and 0 < critical_density ≤ plateau_end < jam_density",
            ))
        }
    }
}

/// Coefficients of the lower envelope `γ(K) = aK³ + bK² + cK`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Envelope {
    pub fn eval(&self, k: f64) -> f64 {
        ((self.a * k + self.b) * k + self.c) * k
    }
}

/// Scenario definition. All times in hours unless the name says otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// km per cell
    pub cell_lengths: Vec<f64>,
    pub cell_lanes: Vec<f64>,
    pub fd: Vec<FundamentalDiagram>,
    /// Share of PZ entries assigned to each cell; sums to one.
    pub inflow_shares: Vec<f64>,
    /// Completion-rate multiplier of each cell at full unloading, in [0.5, 1].
    pub drain_multipliers: Vec<f64>,
    /// How strongly entering traffic avoids cells above their critical
    /// density; zero keeps the nominal shares.
    pub route_sensitivity: f64,
    /// Sensitivity of the unloading intensity to the outflow surplus.
    pub unloading_gain: f64,
    /// Time constant of the unloading intensity smoothing (min).
    pub unloading_smoothing_min: f64,
    /// veh/h
    pub bypass_capacity: f64,
    /// km
    pub bypass_length: f64,
    /// km/h
    pub bypass_free_speed: f64,
    /// Breakpoints `(t, veh/h)` of the total demand, linearly interpolated.
    pub demand_profile: Vec<(f64, f64)>,
    /// Length of a representative PZ trip (km).
    pub pz_path_length: f64,
    /// Value of travel time (currency/h).
    pub vtt: f64,
    /// Logit sensitivity (1/min of generalized cost).
    pub logit_scale: f64,
    /// veh/km/lane
    pub k_cr: f64,
    pub envelope: Envelope,
    /// s
    pub step_s: f64,
    pub horizon: f64,
    pub tolling_window: (f64, f64),
    pub interval_min: f64,
    /// Coefficient of variation of the per-step lognormal demand factor.
    pub demand_cv: f64,
}

const DEFAULT_LENGTHS: [f64; 8] = [2.0, 1.5, 2.5, 1.8, 2.2, 1.6, 2.4, 2.0];
const DEFAULT_LANES: [f64; 8] = [2.0, 3.0, 2.0, 2.0, 3.0, 2.0, 2.0, 3.0];
const SHARE_PATTERN: [f64; 8] = [1.0, -0.5, 0.8, -1.0, 0.3, -0.7, 0.6, -0.5];
const DEFAULT_DRAIN: [f64; 8] = [0.6, 1.0, 0.5, 0.95, 0.7, 1.0, 0.55, 0.9];

impl NetworkConfig {
    /// Default scenario: 8 cells, 4 h horizon, tolling over the last 2 h in
    /// 15 min intervals (`m = 8`).
    pub fn default_preset() -> Self {
        let lane_km: Vec<f64> = DEFAULT_LENGTHS.iter().zip(&DEFAULT_LANES).map(|(l, n)| l * n).collect();
        let raw: Vec<f64> = lane_km.iter().zip(&SHARE_PATTERN).map(|(w, p)| w * (1.0 + 0.2 * p)).collect();
        let total: f64 = raw.iter().sum();
        NetworkConfig {
            cell_lengths: DEFAULT_LENGTHS.to_vec(),
            cell_lanes: DEFAULT_LANES.to_vec(),
            fd: vec![
                FundamentalDiagram {
                    free_flow_speed: 40.0,
                    critical_density: 25.0,
                    plateau_end: 60.0,
                    jam_density: 150.0,
                };
                8
            ],
            inflow_shares: raw.iter().map(|r| r / total).collect(),
            drain_multipliers: DEFAULT_DRAIN.to_vec(),
            route_sensitivity: 2.0,
            unloading_gain: 4.0,
            unloading_smoothing_min: 10.0,
            bypass_capacity: 12000.0,
            bypass_length: 10.0,
            bypass_free_speed: 60.0,
            demand_profile: vec![
                (0.0, 6000.0),
                (1.0, 9000.0),
                (2.0, 12500.0),
                (2.5, 15000.0),
                (3.0, 15000.0),
                (4.0, 10000.0),
            ],
            pz_path_length: 5.0,
            vtt: 15.0,
            logit_scale: 0.25,
            k_cr: 25.0,
            envelope: Envelope {
                a: -0.000178,
                b: 0.00331,
                c: 0.127,
            },
            step_s: 30.0,
            horizon: 4.0,
            tolling_window: (2.0, 4.0),
            interval_min: 15.0,
            demand_cv: 0.05,
        }
    }

    /// Desk-scale scenario: the default network with 30 min intervals
    /// (`m = 4`).
    pub fn desk_preset() -> Self {
        NetworkConfig {
            interval_min: 30.0,
            ..Self::default_preset()
        }
    }

    /// One tolling interval over the whole window (`m = 1`), for
    /// two-dimensional toll searches.
    pub fn restricted_preset() -> Self {
        NetworkConfig {
            interval_min: 120.0,
            ..Self::default_preset()
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cell_lengths.len()
    }

    /// Number of tolling intervals `m`.
    pub fn intervals(&self) -> usize {
        let w = (self.tolling_window.1 - self.tolling_window.0) * 60.0;
        libm::round(w / self.interval_min) as usize
    }

    pub fn steps(&self) -> usize {
        libm::round(self.horizon * 3600.0 / self.step_s) as usize
    }

    /// Lane-km `l_i n_i` of every cell.
    pub fn weights(&self) -> Vec<f64> {
        self.cell_lengths.iter().zip(&self.cell_lanes).map(|(l, n)| l * n).collect()
    }

    /// Demand (veh/h) at time `t`, before noise.
    pub fn demand_at(&self, t: f64) -> f64 {
        let p = &self.demand_profile;
        if t <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            if t <= w[1].0 {
                let s = (t - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + s * (w[1].1 - w[0].1);
            }
        }
        p[p.len() - 1].1
    }

    /// Free-flow PZ path time (min), using the lane-km weighted harmonic mean
    /// of the cell free-flow speeds.
    pub fn pz_free_flow_time(&self) -> f64 {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        let pace: f64 = w.iter().zip(&self.fd).map(|(w, fd)| w / fd.free_flow_speed).sum::<f64>() / total;
        60.0 * self.pz_path_length * pace
    }

    /// Bypass travel time (min) at a flow (veh/h), BPR form.
    pub fn bypass_travel_time(&self, flow: f64) -> f64 {
        let x = (flow / self.bypass_capacity).max(0.0);
        60.0 * self.bypass_length / self.bypass_free_speed * (1.0 + 0.15 * x * x * x * x)
    }

    /// Entry shares at the given accumulations: nominal shares damped by
    /// `exp(−route_sensitivity · max(0, k_i/k_c − 1))`, renormalized.
    pub fn entry_shares(&self, accumulation: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_cells())
            .map(|i| {
                let k = accumulation[i] / (self.cell_lengths[i] * self.cell_lanes[i]);
                let over = (k / self.fd[i].critical_density - 1.0).max(0.0);
                self.inflow_shares[i] * libm::exp(-self.route_sensitivity * over)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|r| r / total).collect()
        } else {
            self.inflow_shares.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.n_cells();
        if c == 0 {
            return Err(invalid("network needs at least one cell"));
        }
        for (name, len) in [
            ("cell_lanes", self.cell_lanes.len()),
            ("fd", self.fd.len()),
            ("inflow_shares", self.inflow_shares.len()),
            ("drain_multipliers", self.drain_multipliers.len()),
        ] {
            if len != c {
                return Err(invalid(format!("{name} has {len} entries, expected {c}")));
            }
        }
        if self.cell_lengths.iter().chain(&self.cell_lanes).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("cell_lengths and cell_lanes must be positive"));
        }
        for fd in &self.fd {
            fd.validate()?;
        }
        if self.inflow_shares.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("inflow_shares must be ≥ 0"));
        }
        let total: f64 = self.inflow_shares.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("inflow_shares must sum to 1, got {total}")));
        }
        if self.drain_multipliers.iter().any(|d| !(0.5..=1.0).contains(d)) {
            return Err(invalid("drain_multipliers must lie in [0.5, 1]"));
        }
        let positive = [
            ("unloading_smoothing_min", self.unloading_smoothing_min),
            ("bypass_capacity", self.bypass_capacity),
            ("bypass_length", self.bypass_length),
            ("bypass_free_speed", self.bypass_free_speed),
            ("pz_path_length", self.pz_path_length),
            ("vtt", self.vtt),
            ("k_cr", self.k_cr),
            ("step_s", self.step_s),
            ("horizon", self.horizon),
            ("interval_min", self.interval_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite")));
            }
        }
        for (name, v) in [
            ("route_sensitivity", self.route_sensitivity),
            ("unloading_gain", self.unloading_gain),
            ("logit_scale", self.logit_scale),
            ("demand_cv", self.demand_cv),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be ≥ 0 and finite")));
            }
        }
        if self.fd.iter().any(|fd| self.k_cr >= fd.jam_density) {
            return Err(invalid("k_cr must lie below every cell's jam density"));
        }
        let e = self.envelope;
        if ![e.a, e.b, e.c].iter().all(|v| v.is_finite()) {
            return Err(invalid("envelope coefficients must be finite"));
        }
        if self.demand_profile.is_empty()
            || self.demand_profile.iter().any(|(t, q)| !(t.is_finite() && *q >= 0.0 && q.is_finite()))
            || self.demand_profile.windows(2).any(|w| !(w[0].0 < w[1].0))
        {
            return Err(invalid("demand_profile needs strictly increasing times and demands ≥ 0"));
        }
        let steps = self.horizon * 3600.0 / self.step_s;
        if (steps - libm::round(steps)).abs() > 1e-9 {
            return Err(invalid("step_s must divide the horizon"));
        }
        let (start, end) = self.tolling_window;
        if !(0.0 <= start && start < end && end <= self.horizon) {
            return Err(invalid("tolling_window must satisfy 0 ≤ start < end ≤ horizon"));
        }
        let m = (end - start) * 60.0 / self.interval_min;
        if (m - libm::round(m)).abs() > 1e-9 {
            return Err(invalid("interval_min must divide the tolling window"));
        }
        let per_step = self.interval_min * 60.0 / self.step_s;
        if (per_step - libm::round(per_step)).abs() > 1e-9 || (start * 3600.0 / self.step_s) % 1.0 != 0.0 {
            return Err(invalid("tolling intervals must align with simulation steps"));
        }
        Ok(())
    }
}

/// Route alternatives of the demand split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    ThroughZone,
    Bypass,
}

/// Travel times the route choice reacts to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteState {
    /// Current PZ path travel time (min).
    pub pz_travel_time: f64,
    /// Current bypass travel time (min).
    pub bypass_travel_time: f64,
}

/// Generalized cost (min). Through the zone: travel time plus the toll
/// `v·L + ω·delay` converted with the value of travel time; the bypass is
/// untolled.
pub fn generalized_cost(route: Route, rates: (f64, f64), state: &RouteState, config: &NetworkConfig) -> f64 {
    match route {
        Route::Bypass => state.bypass_travel_time,
        Route::ThroughZone => {
            let (v, w) = rates;
            let delay_h = (state.pz_travel_time - config.pz_free_flow_time()).max(0.0) / 60.0;
            state.pz_travel_time + 60.0 * (v * config.pz_path_length + w * delay_h) / config.vtt
        }
    }
}

/// Binary logit probability of choosing the PZ route.
pub fn demand_split(cost_pz: f64, cost_bypass: f64, logit_scale: f64) -> f64 {
    1.0 / (1.0 + libm::exp(logit_scale * (cost_pz - cost_bypass)))
}

/// `(γ, K)`: lane-km weighted standard deviation and mean of cell densities.
pub fn spatial_spread(densities: &[f64], lengths: &[f64], lanes: &[f64]) -> Result<(f64, f64)> {
    if densities.is_empty() || densities.len() != lengths.len() || densities.len() != lanes.len() {
        return Err(invalid("spatial spread needs equal, nonzero numbers of densities, lengths and lanes"));
    }
    let mut total = 0.0;
    let mut sum = 0.0;
    for ((k, l), n) in densities.iter().zip(lengths).zip(lanes) {
        let w = l * n;
        if !(w > 0.0) {
            return Err(invalid("spatial spread weights must be positive"));
        }
        total += w;
        sum += w * k;
    }
    let mean = sum / total;
    let var: f64 = densities
        .iter()
        .zip(lengths)
        .zip(lanes)
        .map(|((k, l), n)| l * n * (k - mean) * (k - mean))
        .sum::<f64>()
        / total;
    Ok((libm::sqrt(var), mean))
}

/// `Δ = γ − γ(K)`, not clamped.
pub fn deviation_from_spread(gamma: f64, k: f64, envelope: &Envelope) -> f64 {
    gamma - envelope.eval(k)
}

pub const DEFAULT_ENVELOPE_BINS: usize = 20;

/// Least-squares zero-intercept cubic through the per-bin minima of `γ` over
/// `n_bins` equal-width bins of `K`.
pub fn fit_lower_envelope(samples: &[(f64, f64)], n_bins: usize) -> Result<Envelope> {
    if n_bins == 0 {
        return Err(invalid("envelope fit needs at least one bin"));
    }
    if samples.iter().any(|(k, g)| !(k.is_finite() && g.is_finite())) {
        return Err(invalid("envelope samples must be finite"));
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mut minima: Vec<Option<(f64, f64)>> = vec![None; n_bins];
    let width = (hi - lo) / n_bins as f64;
    for &(k, g) in samples {
        let b = if width > 0.0 { (((k - lo) / width) as usize).min(n_bins - 1) } else { 0 };
        if minima[b].map_or(true, |(_, gm)| g < gm) {
            minima[b] = Some((k, g));
        }
    }
    let points: Vec<(f64, f64)> = minima.into_iter().flatten().collect();
    if points.len() < 3 {
        return Err(invalid(format!(
            "envelope fit needs at least 3 populated K bins, got {}",
            points.len()
        )));
    }
    // columns scaled by powers of max |K| to keep the normal equations well conditioned
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(invalid("envelope fit needs nonzero K values"));
    }
    let mut ata = [0.0; 9];
    let mut atb = [0.0; 3];
    for &(k, g) in &points {
        let t = k / scale;
        let row = [t * t * t, t * t, t];
        for i in 0..3 {
            atb[i] += row[i] * g;
            for j in 0..3 {
                ata[3 * i + j] += row[i] * row[j];
            }
        }
    }
    let chol = Cholesky::factor(&ata, 3).ok_or_else(|| invalid("envelope fit is rank deficient"))?;
    let coef = chol.solve(&atb);
    Ok(Envelope {
        a: coef[0] / (scale * scale * scale),
        b: coef[1] / (scale * scale),
        c: coef[2] / scale,
    })
}

/// State of the network at the end of one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// End time of the step (h).
    pub t: f64,
    /// Network density `K` (veh/km/lane).
    pub k_net: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Lane-km weighted mean flow (veh/h/lane).
    pub flow: f64,
    /// Space-mean speed (km/h).
    pub speed: f64,
    /// Vehicles waiting to enter the zone.
    pub queue: f64,
    /// Vehicles in the zone.
    pub accumulation: f64,
    /// Vehicles that entered the zone during the step.
    pub entered: f64,
    /// Vehicles that completed their trip during the step.
    pub exited: f64,
    /// Probability of choosing the zone during the step.
    pub pz_share: f64,
    pub cell_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Initial accumulation (always zero) followed by one record per step.
    pub time_series: Vec<StepRecord>,
    /// `K̄_h` per tolling interval.
    pub interval_density: Vec<f64>,
    /// `Δ̄_h` per tolling interval.
    pub interval_deviation: Vec<f64>,
    /// Mean time per km of PZ users, entry queue included (min/km).
    pub pz_avg_travel_time: f64,
    /// Mean time per km over both routes (min/km).
    pub net_avg_travel_time: f64,
    /// Toll paid by vehicles entering the zone (currency).
    pub toll_revenue: f64,
    /// Vehicles choosing the zone during the tolling window.
    pub pz_inflow_window: f64,
}

impl SimulationResult {
    /// Mean of `K` over the whole tolling window.
    pub fn window_density(&self) -> f64 {
        self.interval_density.iter().sum::<f64>() / self.interval_density.len() as f64
    }

    /// `(K, γ)` pairs of every step.
    pub fn spread_samples(&self) -> Vec<(f64, f64)> {
        self.time_series[1..].iter().map(|s| (s.k_net, s.gamma)).collect()
    }
}

/// Tolling interval containing time `t` (step start), if any.
fn interval_of(config: &NetworkConfig, t: f64, m: usize) -> Option<usize> {
    let (start, end) = config.tolling_window;
    if t < start - 1e-12 || t >= end - 1e-12 {
        return None;
    }
    let h = libm::floor((t - start) * 60.0 / config.interval_min + 1e-9) as usize;
    Some(h.min(m - 1))
}

/// Runs one replication. The same `(config, toll, seed)` always gives the
/// same result.
pub fn simulate(config: &NetworkConfig, toll: &TollVector, seed: u64) -> Result<SimulationResult> {
    config.validate()?;
    let m = config.intervals();
    if toll.intervals() != m {
        return Err(invalid(format!(
            "toll has {} intervals, the configuration has {m}",
            toll.intervals()
        )));
    }
    if toll.to_flat().iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(invalid("toll rates must be finite and ≥ 0"));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let c = config.n_cells();
    let weights = config.weights();
    let total_weight: f64 = weights.iter().sum();
    let dt = config.step_s / 3600.0;
    let steps = config.steps();
    let free_time = config.pz_free_flow_time();
    let ema = (dt * 60.0 / config.unloading_smoothing_min).min(1.0);

    let mut acc = vec![0.0; c];
    let mut queue = vec![0.0; c];
    let mut unloading = 0.0;
    let mut bypass_flow = 0.0;

    let mut pz_vht = 0.0;
    let mut pz_trips = 0.0;
    let mut bypass_vht = 0.0;
    let mut bypass_vkt = 0.0;
    let mut revenue = 0.0;
    let mut inflow_window = 0.0;

    let record = |t: f64, acc: &[f64], queue: &[f64], entered: f64, exited: f64, share: f64| -> Result<StepRecord> {
        let k: Vec<f64> = acc.iter().zip(&weights).map(|(n, w)| n / w).collect();
        let (gamma, k_net) = spatial_spread(&k, &config.cell_lengths, &config.cell_lanes)?;
        let prod: f64 = k.iter().zip(&weights).zip(&config.fd).map(|((k, w), fd)| fd.flow(*k) * w).sum();
        let veh: f64 = acc.iter().sum();
        Ok(StepRecord {
            t,
            k_net,
            gamma,
            delta: deviation_from_spread(gamma, k_net, &config.envelope),
            flow: prod / total_weight,
            speed: if veh > 0.0 { prod / veh } else { config.pz_path_length * 60.0 / free_time },
            queue: queue.iter().sum(),
            accumulation: veh,
            entered,
            exited,
            pz_share: share,
            cell_density: k,
        })
    };

    let mut series = Vec::with_capacity(steps + 1);
    series.push(record(0.0, &acc, &queue, 0.0, 0.0, 0.0)?);

    for s in 0..steps {
        let t = s as f64 * dt;
        let prev = &series[s];
        let interval = interval_of(config, t, m);
        let rates = interval.map_or((0.0, 0.0), |h| toll.rates(h));

        let state = RouteState {
            pz_travel_time: 60.0 * config.pz_path_length / prev.speed,
            bypass_travel_time: config.bypass_travel_time(bypass_flow),
        };
        let cost_pz = generalized_cost(Route::ThroughZone, rates, &state, config);
        let cost_bypass = generalized_cost(Route::Bypass, rates, &state, config);
        let share = demand_split(cost_pz, cost_bypass, config.logit_scale);
        let demand = config.demand_at(t) * lognormal_factor(&mut rng, config.demand_cv);
        let pz_demand = share * demand;
        bypass_flow = demand - pz_demand;
        if interval.is_some() {
            inflow_window += pz_demand * dt;
        }

        // potential completions (veh/h) without unloading slowdown
        let potential: Vec<f64> = (0..c)
            .map(|i| config.fd[i].flow(acc[i] / weights[i]) * weights[i] / config.pz_path_length)
            .collect();
        let entry_cap: Vec<f64> = (0..c)
            .map(|i| config.fd[i].capacity() * config.cell_lanes[i] * config.fd[i].entry_fraction(acc[i] / weights[i]))
            .collect();
        let shares = config.entry_shares(&acc);
        let arriving: f64 = (0..c).map(|i| queue[i] / dt + shares[i] * pz_demand).sum();
        let entry_rate = arriving.min(entry_cap.iter().sum());
        let out_total: f64 = potential.iter().sum();
        let surplus = if out_total > 0.0 {
            (config.unloading_gain * (out_total - entry_rate) / out_total).clamp(0.0, 1.0)
        } else {
            0.0
        };
        unloading += ema * (surplus - unloading);

        let mut entered = 0.0;
        let mut exited = 0.0;
        let vht_before: f64 = acc.iter().sum::<f64>() + queue.iter().sum::<f64>();
        for i in 0..c {
            let drain = 1.0 - unloading * (1.0 - config.drain_multipliers[i]);
            let out = (drain * potential[i] * dt).min(acc[i]);
            queue[i] += shares[i] * pz_demand * dt;
            let room = config.fd[i].jam_density * weights[i] - (acc[i] - out);
            let inn = queue[i].min(entry_cap[i] * dt).min(room.max(0.0));
            queue[i] -= inn;
            acc[i] = acc[i] - out + inn;
            entered += inn;
            exited += out;
        }
        pz_vht += vht_before * dt;
        pz_trips += exited;
        let tb = config.bypass_travel_time(bypass_flow);
        bypass_vht += bypass_flow * dt * tb / 60.0;
        bypass_vkt += bypass_flow * dt * config.bypass_length;
        if interval.is_some() {
            let delay_h = (state.pz_travel_time - free_time).max(0.0) / 60.0;
            revenue += entered * (rates.0 * config.pz_path_length + rates.1 * delay_h);
        }
        series.push(record((s + 1) as f64 * dt, &acc, &queue, entered, exited, share)?);
    }

    let mut dens = vec![0.0; m];
    let mut dev = vec![0.0; m];
    let mut count = vec![0usize; m];
    for (s, rec) in series[1..].iter().enumerate() {
        if let Some(h) = interval_of(config, s as f64 * dt, m) {
            dens[h] += rec.k_net;
            dev[h] += rec.delta;
            count[h] += 1;
        }
    }
    for h in 0..m {
        dens[h] /= count[h] as f64;
        dev[h] /= count[h] as f64;
    }
    let pz_vkt = pz_trips * config.pz_path_length;
    let per_km = |vht: f64, vkt: f64| if vkt > 0.0 { 60.0 * vht / vkt } else { 0.0 };
    Ok(SimulationResult {
        time_series: series,
        interval_density: dens,
        interval_deviation: dev,
        pz_avg_travel_time: per_km(pz_vht, pz_vkt),
        net_avg_travel_time: per_km(pz_vht + bypass_vht, pz_vkt + bypass_vkt),
        toll_revenue: revenue,
        pz_inflow_window: inflow_window,
    })
}

/// Mean `γ` while unloading minus mean `γ` while loading, averaged over the
/// `K` bins that contain both phases. `None` when no bin does.
pub fn hysteresis_gap(result: &SimulationResult, n_bins: usize) -> Option<f64> {
    let ts = &result.time_series;
    let lo = ts.iter().map(|s| s.k_net).fold(f64::INFINITY, f64::min);
    let hi = ts.iter().map(|s| s.k_net).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || n_bins == 0 {
        return None;
    }
    let width = (hi - lo) / n_bins as f64;
    // (sum γ loading, n loading, sum γ unloading, n unloading)
    let mut bins = vec![(0.0, 0usize, 0.0, 0usize); n_bins];
    for w in ts.windows(2) {
        let dk = w[1].k_net - w[0].k_net;
        let b = (((w[1].k_net - lo) / width) as usize).min(n_bins - 1);
        if dk > 0.0 {
            bins[b].0 += w[1].gamma;
            bins[b].1 += 1;
        } else if dk < 0.0 {
            bins[b].2 += w[1].gamma;
            bins[b].3 += 1;
        }
    }
    let gaps: Vec<f64> = bins
        .iter()
        .filter(|b| b.1 > 0 && b.3 > 0)
        .map(|b| b.2 / b.3 as f64 - b.0 / b.1 as f64)
        .collect();
    if gaps.is_empty() {
        None
    } else {
        Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
    }
}
