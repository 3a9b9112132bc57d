#![allow(dead_code)]

use reset_shaping::hosidf::{BaseLinearLoop, CglpStage, LoopModel, PlantResponse};
use reset_shaping::lti::{make_nrc, make_tracking_controller, NotchParams, TrackingParams};
use reset_shaping::plant::{build_modal_plant, ModalPlant};
use reset_shaping::reset::base_linear;
use reset_shaping::tuning::{make_shaping_filter, CglpDesign, ShapingParams};
use reset_shaping::sim::DEFAULT_TS;

/// Synthetic three-mode stage with the participation weights used by the
/// shipped presets.
pub fn plant(extra_delay: f64) -> ModalPlant {
    let mut p = ModalPlant::default();
    for (m, w) in p.modes.iter_mut().zip([1.0, 0.3, 0.1]) {
        m.weight = w;
    }
    p.delay_s += extra_delay;
    p
}

pub struct CaseSpec {
    pub kp: f64,
    pub omega_i_hz: f64,
    pub notch1: (f64, f64, f64),
    pub cglp: Option<(f64, f64, f64)>,
    pub shaping: Option<(f64, f64)>,
}

pub const CASE1: CaseSpec = CaseSpec { kp: 0.21, omega_i_hz: 10.0, notch1: (1100.0, 1.05, 1.0), cglp: None, shaping: None };
pub const CASE4: CaseSpec = CaseSpec {
    kp: 0.2578,
    omega_i_hz: 15.0,
    notch1: (1000.0, 1.0571, 0.7),
    cglp: Some((205.5480, 672.3213, 0.0)),
    shaping: None,
};
pub const CASE5: CaseSpec = CaseSpec {
    kp: 0.28,
    omega_i_hz: 15.0,
    notch1: (1000.0, 1.0571, 0.7),
    cglp: Some((181.2853, 882.7832, 0.0)),
    shaping: None,
};

/// `analysis = true` folds the simulator's one-sample computation delay into
/// the plant.
pub fn model(c: &CaseSpec, analysis: bool) -> LoopModel {
    let g = build_modal_plant(&plant(if analysis { DEFAULT_TS } else { 0.0 })).unwrap().tf;
    let (_, damping) = make_nrc(1.0, 8.0, 1.0, 710.0).unwrap();
    let tracking = make_tracking_controller(&TrackingParams {
        kp: c.kp,
        omega_i_hz: c.omega_i_hz,
        notches: vec![
            NotchParams { omega_hz: c.notch1.0, q_num: c.notch1.1, q_den: c.notch1.2 },
            NotchParams { omega_hz: 2582.0, q_num: 40.0, q_den: 5.0 },
        ],
        omega_lpf_hz: 5000.0,
    })
    .unwrap();
    let cglp = match c.cglp {
        Some((l, f, g)) => CglpDesign::from_corners(l, f, g).unwrap().stage().unwrap(),
        None => CglpStage::identity(),
    };
    let shaping = c.shaping.map(|(lambda, q)| {
        let p = ShapingParams { omega_l_hz: 200.0, omega_h_hz: 800.0, lambda, q, order: 2, symmetric_notches: false };
        make_shaping_filter(&p, &base_linear(&cglp.reset)).unwrap()
    });
    LoopModel {
        plant: PlantResponse::Rational(g),
        damping,
        tracking,
        cglp,
        shaping,
        base_linear_loop: BaseLinearLoop::Full,
    }
}
