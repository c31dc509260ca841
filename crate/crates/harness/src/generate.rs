//! Seeded synthetic scenario days: TOU prices, wholesale sell prices with an
//! evening spike, clear-sky solar with cloud cover, a residential base-load
//! shape, and workplace plus evening charging sessions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use voltguard::env::{ScenarioData, StationConfig, StationSession};
use voltguard::ev::{EvDefaults, EvSession};

/// Base-load multiplier by hour of day.
const LOAD_SHAPE: [f64; 24] = [
    0.42, 0.40, 0.39, 0.38, 0.39, 0.42, 0.46, 0.50, 0.53, 0.55, 0.56, 0.56, //
    0.55, 0.54, 0.54, 0.55, 0.58, 0.62, 0.65, 0.66, 0.64, 0.59, 0.52, 0.46,
];

fn tou_price(hour: usize) -> f64 {
    match hour {
        0..=6 => 0.15,
        16..=20 => 0.45,
        _ => 0.25,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub days: usize,
    pub seed: u64,
    pub horizon: usize,
}

/// Generates `cfg.days` scenarios named `day00`, `day01`, ...
pub fn synthetic_days(cfg: &GeneratorConfig, stations: &[StationConfig], ev: &EvDefaults) -> Vec<ScenarioData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.days).map(|d| one_day(d, cfg.horizon, stations, ev, &mut rng)).collect()
}

fn one_day(
    day: usize,
    horizon: usize,
    stations: &[StationConfig],
    ev: &EvDefaults,
    rng: &mut ChaCha8Rng,
) -> ScenarioData {
    let jitter = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    let hour = |t: usize| (t * 24) / horizon.max(1);
    let round = |v: f64, places: i32| {
        let s = 10f64.powi(places);
        (v * s).round() / s
    };

    let load_level = rng.random_range(0.91..0.99);
    let clear = rng.random_range(0.45..1.0);
    let spike = rng.random_range(0.25..0.55);
    let spike_hour = rng.random_range(17..=19);

    let mut solar = Vec::with_capacity(horizon);
    let mut buy = Vec::with_capacity(horizon);
    let mut sell = Vec::with_capacity(horizon);
    let mut load = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let h = hour(t);
        let shape = ((h as f64 - 6.0) * std::f64::consts::PI / 13.0).sin().max(0.0);
        let cloud = (1.0 + 0.15 * jitter.sample(rng)).clamp(0.5, 1.2);
        solar.push(round((0.85 * shape * clear * cloud).clamp(0.0, 1.0), 4));

        buy.push(tou_price(h));
        let base = if (9..=15).contains(&h) { 0.09 } else { 0.07 };
        let wholesale = if h == spike_hour {
            spike
        } else if h.abs_diff(spike_hour) == 1 {
            0.5 * (base + spike)
        } else {
            base * (1.0 + 0.1 * jitter.sample(rng)).max(0.5)
        };
        sell.push(round(wholesale, 4));

        let m = LOAD_SHAPE[h] * load_level * (1.0 + 0.015 * jitter.sample(rng));
        load.push(round(m.max(0.0), 4));
    }
    let trade: Vec<f64> = buy.iter().zip(&sell).map(|(b, s)| round(0.5 * (b + s), 6)).collect();

    let mut sessions = Vec::new();
    for (s, st) in stations.iter().enumerate() {
        let c = st.chargers;
        if c == 0 {
            continue;
        }
        let workplace = 1 + rng.random_range(0..=c / 3);
        let evening = (c - workplace).min(2 + rng.random_range(0..=1));
        let scale = |h: usize| (h * horizon) / 24;
        let mut add = |id: String, arr_h: usize, dep_h: usize, e_init: f64, need: f64| {
            let arrival = scale(arr_h);
            let departure = scale(dep_h).clamp(arrival + 1, horizon);
            let e_init = round(e_init, 2);
            let e_dem = round((e_init + need).min(0.95 * ev.e_cap), 2);
            sessions.push(StationSession {
                station: s,
                session: EvSession::new(id, arrival, departure, e_init, e_dem, ev),
            });
        };
        for k in 0..workplace {
            let arr = rng.random_range(7..=9);
            let dep = rng.random_range(16..=18);
            let e0 = rng.random_range(12.0..30.0);
            let need = rng.random_range(12.0..28.0);
            add(format!("d{day:02}s{s}w{k}"), arr, dep, e0, need);
        }
        for k in 0..evening {
            let arr = rng.random_range(16..=18);
            let dep = rng.random_range(21..=23);
            let e0 = rng.random_range(10.0..25.0);
            let need = rng.random_range(15.0..30.0);
            add(format!("d{day:02}s{s}e{k}"), arr, dep, e0, need);
        }
    }

    ScenarioData {
        name: format!("day{day:02}"),
        solar,
        buy,
        sell,
        trade,
        load_multiplier: load,
        sessions,
    }
}
