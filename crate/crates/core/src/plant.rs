//! Plant-side runtime: consistent actuator, nominal model, ancillary
//! controller and plant packets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{ControllerPacket, MpcVariant};
use crate::synthesis::LtiModel;

/// `Θ_k`: `θ_k` times every `θ_i` since `q_k + 1`.
pub fn consistency_flag(theta_k: bool, thetas_since: &[bool]) -> bool {
    theta_k && thetas_since.iter().all(|t| *t)
}

/// Actuator that only adopts packets computed on a consistent estimate.
///
/// Only the most recent lost step is remembered: `Θ_k` needs nothing more
/// than "no loss after `q_k`".
#[derive(Debug, Clone, Default)]
pub struct ActuatorState {
    s: Option<i64>,
    active: Option<ControllerPacket>,
    last_loss: Option<i64>,
}

impl ActuatorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of the packet in use.
    pub fn s(&self) -> Option<i64> {
        self.s
    }

    pub fn active_packet(&self) -> Option<&ControllerPacket> {
        self.active.as_ref()
    }

    /// Record `θ_k` and return `Θ_k`.
    pub fn receive(&mut self, k: i64, incoming: Option<&ControllerPacket>) -> bool {
        match incoming {
            None => {
                self.last_loss = Some(k);
                false
            }
            Some(p) => self.last_loss.is_none_or(|l| l <= p.q),
        }
    }

    /// Adopt the packet when `Θ_k = 1` and return `u_n(k)`.
    pub fn step(
        &mut self,
        incoming: Option<&ControllerPacket>,
        big_theta: bool,
        k: i64,
        x_n: &DVector<f64>,
        k_bar: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        if big_theta {
            let p = incoming.ok_or_else(|| Error::Protocol("consistent flag set without a packet".into()))?;
            self.s = Some(p.k_sent);
            self.active = Some(p.clone());
        }
        let active = self
            .active
            .as_ref()
            .ok_or_else(|| Error::Protocol(format!("no packet adopted by step {k}")))?;
        active.input_at(k, x_n, k_bar)
    }
}

/// `u = u_n − K(x − x_n)`.
pub fn ancillary_control(u_n: &DVector<f64>, x_n: &DVector<f64>, x: &DVector<f64>, k: &DMatrix<f64>) -> DVector<f64> {
    u_n - k * (x - x_n)
}

/// `x_n⁺ = Ax_n + Bu_n`.
pub fn nominal_step(x_n: &DVector<f64>, u_n: &DVector<f64>, model: &LtiModel) -> DVector<f64> {
    &model.a * x_n + &model.b * u_n
}

/// Extended variant: restart the nominal state from the packet's `x*(0)`.
pub fn nominal_reset(
    x_n: &DVector<f64>,
    packet: Option<&ControllerPacket>,
    big_theta: bool,
    variant: MpcVariant,
) -> Result<DVector<f64>> {
    match (variant, big_theta) {
        (MpcVariant::Ert, true) => packet
            .and_then(|p| p.x0_opt.clone())
            .ok_or_else(|| Error::Protocol("extended packet without x*(0)".into())),
        _ => Ok(x_n.clone()),
    }
}

/// Plant-to-controller packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantPacket {
    pub x_n: DVector<f64>,
    pub s: i64,
    /// Measured state, extended variant only.
    pub x: Option<DVector<f64>>,
    pub k_sent: i64,
}

pub fn make_plant_packet(x_n: &DVector<f64>, s: i64, x: &DVector<f64>, k: i64, variant: MpcVariant) -> PlantPacket {
    PlantPacket {
        x_n: x_n.clone(),
        s,
        x: match variant {
            MpcVariant::Rt => None,
            MpcVariant::Ert => Some(x.clone()),
        },
        k_sent: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn packet(k: i64, q: i64, u: &[f64], affine: f64) -> ControllerPacket {
        ControllerPacket {
            u_traj: u.iter().map(|v| DVector::from_element(1, *v)).collect(),
            steady_input_affine: DVector::from_element(1, affine),
            q,
            k_sent: k,
            x0_opt: Some(DVector::from_element(1, 0.25)),
        }
    }

    #[test]
    fn flag_examples() {
        assert!(!consistency_flag(false, &[true, true]));
        assert!(consistency_flag(true, &[true, true, true]));
        assert!(consistency_flag(true, &[]));
        assert!(!consistency_flag(true, &[true, false, true]));
    }

    #[test]
    fn adopts_consistent_packet() {
        let mut act = ActuatorState::new();
        let p = packet(0, -1, &[0.7, 0.1], 0.0);
        let flag = act.receive(0, Some(&p));
        assert!(flag);
        let u = act.step(Some(&p), flag, 0, &DVector::zeros(1), &dmatrix![0.5]).unwrap();
        assert_eq!(u[0], 0.7);
        assert_eq!(act.s(), Some(0));
    }

    #[test]
    fn exhausted_packet_falls_back_to_steady_law() {
        let mut act = ActuatorState::new();
        let p = packet(0, -1, &[0.7], 2.0);
        act.receive(0, Some(&p));
        act.step(Some(&p), true, 0, &DVector::zeros(1), &dmatrix![0.5]).unwrap();
        assert!(!act.receive(1, None));
        let u = act
            .step(None, false, 1, &DVector::from_element(1, 2.0), &dmatrix![0.5])
            .unwrap();
        assert_eq!(u[0], 1.0);
    }

    #[test]
    fn rejects_packet_after_a_gap() {
        let mut act = ActuatorState::new();
        let p0 = packet(0, -1, &[1.0, 2.0, 3.0], 0.0);
        act.receive(0, Some(&p0));
        act.step(Some(&p0), true, 0, &DVector::zeros(1), &dmatrix![0.0])
            .unwrap();
        // Step 1 lost; step 2 arrives but the controller has only seen step 0.
        act.receive(1, None);
        let p2 = packet(2, 0, &[9.0], 0.0);
        let flag = act.receive(2, Some(&p2));
        assert!(!flag);
        let u = act
            .step(Some(&p2), flag, 2, &DVector::zeros(1), &dmatrix![0.0])
            .unwrap();
        assert_eq!(u[0], 3.0);
        assert_eq!(act.s(), Some(0));
        // Once the controller has seen step 1 the gap no longer matters.
        let p3 = packet(3, 1, &[4.0], 0.0);
        assert!(act.receive(3, Some(&p3)));
    }

    #[test]
    fn actuator_needs_a_packet() {
        let mut act = ActuatorState::new();
        assert!(act.step(None, false, 0, &DVector::zeros(1), &dmatrix![0.0]).is_err());
        assert!(act.step(None, true, 0, &DVector::zeros(1), &dmatrix![0.0]).is_err());
    }

    #[test]
    fn ancillary_examples() {
        let x = DVector::from_element(1, 1.1);
        let xn = DVector::from_element(1, 1.0);
        let un = DVector::from_element(1, 1.0);
        assert_eq!(ancillary_control(&un, &xn, &xn, &dmatrix![2.0]), un);
        assert_eq!(ancillary_control(&un, &xn, &x, &dmatrix![0.0]), un);
        assert!((ancillary_control(&un, &xn, &x, &dmatrix![2.0])[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn nominal_step_examples() {
        let model = LtiModel::new(dmatrix![1.0, 0.1; 0.0, 1.0], dmatrix![0.0, 1.0; 1.0, 0.0], 0.1).unwrap();
        assert_eq!(
            nominal_step(&DVector::zeros(2), &DVector::zeros(2), &model),
            DVector::zeros(2)
        );
        let e1 = DVector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(
            nominal_step(&DVector::zeros(2), &e1, &model),
            model.b.column(0).into_owned()
        );
    }

    #[test]
    fn reset_examples() {
        let xn = DVector::from_element(1, 1.0);
        let p = packet(0, -1, &[0.0], 0.0);
        assert_eq!(nominal_reset(&xn, Some(&p), false, MpcVariant::Ert).unwrap(), xn);
        assert_eq!(nominal_reset(&xn, Some(&p), true, MpcVariant::Rt).unwrap(), xn);
        assert_eq!(nominal_reset(&xn, Some(&p), true, MpcVariant::Ert).unwrap()[0], 0.25);
        let mut bare = p.clone();
        bare.x0_opt = None;
        assert!(nominal_reset(&xn, Some(&bare), true, MpcVariant::Ert).is_err());
    }

    #[test]
    fn plant_packet_fields() {
        let xn = DVector::from_element(2, 1.0);
        let x = DVector::from_element(2, 2.0);
        let rt = make_plant_packet(&xn, 3, &x, 4, MpcVariant::Rt);
        assert_eq!(
            (rt.x_n.clone(), rt.s, rt.x.clone(), rt.k_sent),
            (xn.clone(), 3, None, 4)
        );
        let ert = make_plant_packet(&xn, 3, &x, 4, MpcVariant::Ert);
        assert_eq!(ert.x, Some(x.clone()));
        let lossless = make_plant_packet(&xn, 4, &x, 4, MpcVariant::Rt);
        assert_eq!(lossless.s, lossless.k_sent);
    }
}
