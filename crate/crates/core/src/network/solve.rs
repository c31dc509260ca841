use super::{InjectionProfile, NetworkError, RadialNetwork, VoltageSolution};

/// Solves the simplified (lossless, linearized) DistFlow equations.
///
/// Line flows are accumulated leaves-to-root as subtree withdrawals, then
/// voltages are swept root-to-leaves with
/// `v_m = v_n - (r_nm * P_nm + x_nm * Q_nm) / v0`.
pub fn solve_distflow(
    net: &RadialNetwork,
    inj: &InjectionProfile,
) -> Result<VoltageSolution, NetworkError> {
    let n = net.len();
    if inj.p.len() != n || inj.q.len() != n {
        return Err(NetworkError::Dimension {
            expected: n,
            got: if inj.p.len() != n { inj.p.len() } else { inj.q.len() },
        });
    }

    let buses = net.buses();
    let mut flow_p = inj.p.clone();
    let mut flow_q = inj.q.clone();
    for &m in net.order().iter().skip(1).rev() {
        let parent = buses[m].parent.expect("non-root bus has a parent");
        if parent != 0 {
            flow_p[parent] += flow_p[m];
            flow_q[parent] += flow_q[m];
        }
    }

    let v0 = net.v0();
    let mut v = vec![0.0; n];
    v[0] = v0;
    for &m in net.order().iter().skip(1) {
        let b = &buses[m];
        let parent = b.parent.expect("non-root bus has a parent");
        v[m] = v[parent] - (b.r * flow_p[m] + b.x * flow_q[m]) / v0;
    }
    Ok(VoltageSolution { v })
}

/// Voltage violation count and summed magnitude for one solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ViolationMetrics {
    pub vvn: u32,
    pub vva: f64,
}

pub fn violation_metrics(sol: &VoltageSolution, net: &RadialNetwork) -> ViolationMetrics {
    let (lo, hi) = (net.v_min(), net.v_max());
    let mut out = ViolationMetrics::default();
    for &v in &sol.v {
        if v > hi {
            out.vvn += 1;
            out.vva += v - hi;
        }
        if v < lo {
            out.vvn += 1;
            out.vva += lo - v;
        }
    }
    out
}

/// `beta * vvn + (1 - beta) * vva`.
pub fn auxiliary_cost(vvn: f64, vva: f64, beta: f64) -> Result<f64, NetworkError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(NetworkError::Beta(beta));
    }
    Ok(beta * vvn + (1.0 - beta) * vva)
}
