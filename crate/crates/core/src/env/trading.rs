use super::EnvError;

/// Result of clearing one step of inter-station trading (kWh per station).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TradeClearing {
    /// Total energy matched between stations.
    pub matched: f64,
    /// Energy each station delivered to peers.
    pub delivered: Vec<f64>,
    /// Energy each station received from peers.
    pub received: Vec<f64>,
    /// Residual surplus sold to the grid.
    pub grid_sale: Vec<f64>,
    /// Residual deficit bought from the grid.
    pub grid_purchase: Vec<f64>,
}

/// Clears inter-station trades.
///
/// Station `n` offers `fractions[n] * surplus[n]` or requests
/// `fractions[n] * deficit[n]`. The matched volume is the smaller of the two
/// totals; the long side is served pro rata. Whatever is not matched
/// settles with the grid.
pub fn dispatch_trading(
    surplus: &[f64],
    deficit: &[f64],
    fractions: &[f64],
) -> Result<TradeClearing, EnvError> {
    let n = surplus.len();
    if deficit.len() != n || fractions.len() != n {
        return Err(EnvError::Dimension {
            what: "trading inputs",
            expected: n,
            got: deficit.len().max(fractions.len()),
        });
    }
    for i in 0..n {
        let (s, d, f) = (surplus[i], deficit[i], fractions[i]);
        if !(s >= 0.0 && d >= 0.0) || !s.is_finite() || !d.is_finite() {
            return Err(EnvError::Trading(format!(
                "station {i}: surplus and deficit must be finite and non-negative"
            )));
        }
        if s > 0.0 && d > 0.0 {
            return Err(EnvError::Trading(format!(
                "station {i} has both a surplus and a deficit"
            )));
        }
        if !(0.0..=1.0).contains(&f) {
            return Err(EnvError::Trading(format!(
                "station {i}: trade fraction {f} outside [0, 1]"
            )));
        }
    }

    let offered: Vec<f64> = surplus.iter().zip(fractions).map(|(s, f)| s * f).collect();
    let requested: Vec<f64> = deficit.iter().zip(fractions).map(|(d, f)| d * f).collect();
    let total_offer: f64 = offered.iter().sum();
    let total_request: f64 = requested.iter().sum();
    let matched = total_offer.min(total_request);

    let share = |amounts: &[f64], total: f64| -> Vec<f64> {
        if matched <= 0.0 || total <= 0.0 {
            return vec![0.0; amounts.len()];
        }
        if matched >= total {
            return amounts.to_vec();
        }
        amounts.iter().map(|a| a * matched / total).collect()
    };
    let delivered = share(&offered, total_offer);
    let received = share(&requested, total_request);

    let grid_sale = surplus.iter().zip(&delivered).map(|(s, x)| (s - x).max(0.0)).collect();
    let grid_purchase = deficit.iter().zip(&received).map(|(d, x)| (d - x).max(0.0)).collect();

    Ok(TradeClearing { matched, delivered, received, grid_sale, grid_purchase })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_trading_settles_with_grid() {
        let c = dispatch_trading(&[10.0, 0.0], &[0.0, 4.0], &[0.0, 0.0]).unwrap();
        assert_eq!(c.matched, 0.0);
        assert_eq!(c.grid_sale, vec![10.0, 0.0]);
        assert_eq!(c.grid_purchase, vec![0.0, 4.0]);
    }

    #[test]
    fn long_offer_side() {
        let c = dispatch_trading(&[10.0, 0.0], &[0.0, 4.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.matched, 4.0);
        assert_eq!(c.delivered, vec![4.0, 0.0]);
        assert_eq!(c.received, vec![0.0, 4.0]);
        assert_eq!(c.grid_sale, vec![6.0, 0.0]);
        assert_eq!(c.grid_purchase, vec![0.0, 0.0]);
    }

    #[test]
    fn long_request_side_is_pro_rata() {
        let c = dispatch_trading(&[4.0, 0.0, 0.0], &[0.0, 6.0, 6.0], &[1.0; 3]).unwrap();
        assert_eq!(c.matched, 4.0);
        assert_eq!(c.received, vec![0.0, 2.0, 2.0]);
        assert_eq!(c.grid_purchase, vec![0.0, 4.0, 4.0]);
        assert_eq!(c.grid_sale, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn partial_fractions() {
        let c = dispatch_trading(&[10.0, 0.0], &[0.0, 8.0], &[0.5, 0.25]).unwrap();
        assert_eq!(c.matched, 2.0);
        assert_eq!(c.grid_sale, vec![8.0, 0.0]);
        assert_eq!(c.grid_purchase, vec![0.0, 6.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(dispatch_trading(&[-1.0], &[0.0], &[1.0]).is_err());
        assert!(dispatch_trading(&[1.0], &[1.0], &[1.0]).is_err());
        assert!(dispatch_trading(&[1.0], &[0.0], &[1.5]).is_err());
        assert!(dispatch_trading(&[1.0], &[0.0, 0.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn clearing_balances(
            pos in proptest::collection::vec((-20.0f64..20.0, 0.0f64..=1.0), 1..8),
        ) {
            let surplus: Vec<f64> = pos.iter().map(|(x, _)| x.max(0.0)).collect();
            let deficit: Vec<f64> = pos.iter().map(|(x, _)| (-x).max(0.0)).collect();
            let fr: Vec<f64> = pos.iter().map(|(_, f)| *f).collect();
            let c = dispatch_trading(&surplus, &deficit, &fr).unwrap();
            let out: f64 = c.delivered.iter().sum();
            let inn: f64 = c.received.iter().sum();
            prop_assert!((out - inn).abs() < 1e-9);
            prop_assert!((out - c.matched).abs() < 1e-9);
            for i in 0..surplus.len() {
                prop_assert!((c.delivered[i] + c.grid_sale[i] - surplus[i]).abs() < 1e-9);
                prop_assert!((c.received[i] + c.grid_purchase[i] - deficit[i]).abs() < 1e-9);
            }
        }
    }
}
