//! Controller-side estimator of the plant's nominal (or true) state.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mpc::{ControllerPacket, MpcVariant};
use crate::plant::{ancillary_control, PlantPacket};
use crate::synthesis::{GainSet, LtiModel};

/// `q_{k+1} = γ_k·k + (1 − γ_k)·q_k`.
pub fn q_update(q: i64, gamma_k: bool, k: i64) -> i64 {
    if gamma_k {
        k
    } else {
        q
    }
}

/// Estimate `x̂(k|k−1)`, the last plant index seen, and every packet sent
/// that the plant might still be executing.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    x_hat: DVector<f64>,
    q: i64,
    sent: BTreeMap<i64, ControllerPacket>,
}

impl EstimatorState {
    /// Start from a known estimate with `q = −1`.
    pub fn new(x_hat: DVector<f64>) -> Self {
        EstimatorState {
            x_hat,
            q: -1,
            sent: BTreeMap::new(),
        }
    }

    pub fn x_hat(&self) -> &DVector<f64> {
        &self.x_hat
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    /// Keep a copy of a packet before it goes on the wire.
    pub fn record_sent(&mut self, packet: ControllerPacket) {
        self.sent.insert(packet.k_sent, packet);
    }

    /// Number of stored packets.
    pub fn stored(&self) -> usize {
        self.sent.len()
    }

    /// `u_n(k)` as the plant computed it, replayed from the stored packet `U_s`.
    pub fn replica_input(&self, k: i64, s: i64, x_n: &DVector<f64>, gains: &GainSet) -> Result<DVector<f64>> {
        let packet = self
            .sent
            .get(&s)
            .ok_or_else(|| Error::Protocol(format!("plant reports packet {s}, which was never stored")))?;
        packet.input_at(k, x_n, &gains.k_bar)
    }

    /// Advance to `x̂(k+1|k)` and `q_{k+1}`.
    ///
    /// `sent_k` is the packet sent at step `k`; its first input is the
    /// fallback when the plant packet is lost.
    pub fn update(
        &mut self,
        incoming: Option<&PlantPacket>,
        sent_k: &ControllerPacket,
        k: i64,
        variant: MpcVariant,
        model: &LtiModel,
        gains: &GainSet,
    ) -> Result<()> {
        let (x_kk, u_kk) = match (incoming, variant) {
            (Some(p), MpcVariant::Rt) => {
                let u_n = self.replica_input(k, p.s, &p.x_n, gains)?;
                (p.x_n.clone(), u_n)
            }
            (Some(p), MpcVariant::Ert) => {
                let x =
                    p.x.as_ref()
                        .ok_or_else(|| Error::Protocol("extended plant packet without x".into()))?;
                let u_n = self.replica_input(k, p.s, &p.x_n, gains)?;
                (x.clone(), ancillary_control(&u_n, &p.x_n, x, &gains.k))
            }
            (None, MpcVariant::Rt) => {
                let u = sent_k.input_at(k, &self.x_hat, &gains.k_bar)?;
                (self.x_hat.clone(), u)
            }
            (None, MpcVariant::Ert) => {
                let x0 = sent_k
                    .x0_opt
                    .clone()
                    .ok_or_else(|| Error::Protocol("extended packet without x*(0)".into()))?;
                let u = sent_k.input_at(k, &x0, &gains.k_bar)?;
                (x0, u)
            }
        };
        self.x_hat = &model.a * x_kk + &model.b * u_kk;
        self.q = q_update(self.q, incoming.is_some(), k);
        if let Some(p) = incoming {
            // The plant's s never decreases, so older packets are dead.
            self.sent = self.sent.split_off(&p.s);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{make_plant_packet, nominal_step, ActuatorState};
    use nalgebra::{dmatrix, DMatrix};

    fn setup() -> (LtiModel, GainSet) {
        let model = LtiModel::new(dmatrix![1.2, 0.1; 0.0, 0.9], dmatrix![0.0; 1.0], 0.1).unwrap();
        let gains = GainSet {
            k: dmatrix![0.5, 0.4],
            k_bar: dmatrix![0.3, 0.2],
            p: DMatrix::identity(2, 2),
        };
        (model, gains)
    }

    fn packet(k: i64, q: i64, scale: f64) -> ControllerPacket {
        ControllerPacket {
            u_traj: (0..3)
                .map(|i| DVector::from_element(1, scale * (i as f64 + 1.0)))
                .collect(),
            steady_input_affine: DVector::from_element(1, 0.1),
            q,
            k_sent: k,
            x0_opt: Some(DVector::from_column_slice(&[0.1, -0.1])),
        }
    }

    #[test]
    fn q_examples() {
        assert_eq!(q_update(3, true, 7), 7);
        assert_eq!(q_update(3, false, 7), 3);
        let mut q = -1;
        for k in 0..100 {
            q = q_update(q, false, k);
        }
        assert_eq!(q, -1);
    }

    #[test]
    fn received_nominal_state_is_propagated_exactly() {
        let (model, gains) = setup();
        let mut est = EstimatorState::new(DVector::zeros(2));
        let p = packet(0, -1, 0.5);
        est.record_sent(p.clone());
        let x_n = DVector::from_column_slice(&[0.3, -0.2]);
        let pp = make_plant_packet(&x_n, 0, &x_n, 0, MpcVariant::Rt);
        est.update(Some(&pp), &p, 0, MpcVariant::Rt, &model, &gains).unwrap();
        let expected = nominal_step(&x_n, &p.u_traj[0], &model);
        assert_eq!(est.x_hat(), &expected);
        assert_eq!(est.q(), 0);
    }

    #[test]
    fn lost_packet_uses_first_planned_input() {
        let (model, gains) = setup();
        let x0 = DVector::from_column_slice(&[0.3, -0.2]);
        let mut est = EstimatorState::new(x0.clone());
        let p = packet(0, -1, 0.5);
        est.record_sent(p.clone());
        est.update(None, &p, 0, MpcVariant::Rt, &model, &gains).unwrap();
        assert_eq!(est.x_hat(), &nominal_step(&x0, &p.u_traj[0], &model));
        assert_eq!(est.q(), -1);
    }

    #[test]
    fn extended_estimate_uses_measured_state() {
        let (model, gains) = setup();
        let mut est = EstimatorState::new(DVector::zeros(2));
        let p = packet(0, -1, 0.5);
        est.record_sent(p.clone());
        let x_n = DVector::from_column_slice(&[0.1, -0.1]);
        let x = DVector::from_column_slice(&[0.12, -0.09]);
        let pp = make_plant_packet(&x_n, 0, &x, 0, MpcVariant::Ert);
        est.update(Some(&pp), &p, 0, MpcVariant::Ert, &model, &gains).unwrap();
        let u = ancillary_control(&p.u_traj[0], &x_n, &x, &gains.k);
        assert_eq!(est.x_hat(), &(&model.a * &x + &model.b * u));

        let mut lost = EstimatorState::new(DVector::zeros(2));
        lost.record_sent(p.clone());
        lost.update(None, &p, 0, MpcVariant::Ert, &model, &gains).unwrap();
        let x0 = p.x0_opt.clone().unwrap();
        assert_eq!(lost.x_hat(), &nominal_step(&x0, &p.u_traj[0], &model));
    }

    #[test]
    fn unknown_packet_is_a_protocol_error() {
        let (model, gains) = setup();
        let mut est = EstimatorState::new(DVector::zeros(2));
        let p = packet(0, -1, 0.5);
        let pp = make_plant_packet(&DVector::zeros(2), 0, &DVector::zeros(2), 0, MpcVariant::Rt);
        assert!(est.update(Some(&pp), &p, 0, MpcVariant::Rt, &model, &gains).is_err());
    }

    #[test]
    fn replica_tracks_plant_over_a_lossy_script() {
        // Hand-driven protocol with fixed packets: whenever the plant packet
        // arrives, the replica reproduces the plant's u_n bit for bit.
        let (model, gains) = setup();
        let theta = [true, true, false, true, true, false, false, true, true, true];
        let gamma = [true, false, true, true, false, true, true, false, true, true];
        let mut act = ActuatorState::new();
        let mut est = EstimatorState::new(DVector::zeros(2));
        let mut x_n = DVector::zeros(2);
        for k in 0..theta.len() as i64 {
            let sent = packet(k, est.q(), 0.1 * (k as f64 + 1.0));
            est.record_sent(sent.clone());
            let incoming = theta[k as usize].then_some(&sent);
            let flag = act.receive(k, incoming);
            if flag {
                assert_eq!(est.x_hat(), &x_n, "consistent adoption at {k}");
            }
            let u_n = act.step(incoming, flag, k, &x_n, &gains.k_bar).unwrap();
            let pp = make_plant_packet(&x_n, act.s().unwrap(), &x_n, k, MpcVariant::Rt);
            if gamma[k as usize] {
                assert_eq!(est.replica_input(k, pp.s, &pp.x_n, &gains).unwrap(), u_n);
            }
            est.update(
                gamma[k as usize].then_some(&pp),
                &sent,
                k,
                MpcVariant::Rt,
                &model,
                &gains,
            )
            .unwrap();
            x_n = nominal_step(&x_n, &u_n, &model);
        }
    }
}
