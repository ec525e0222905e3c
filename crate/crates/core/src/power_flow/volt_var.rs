use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Piecewise-linear volt-var droop. Below `v1` the inverter supplies full
/// reactive power (+1), between `v2` and `v3` it does nothing, above `v4` it
/// absorbs fully (-1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltVarCurve {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
}

impl Default for VoltVarCurve {
    fn default() -> Self {
        VoltVarCurve {
            v1: 0.96,
            v2: 0.98,
            v3: 1.02,
            v4: 1.04,
        }
    }
}

impl VoltVarCurve {
    /// Reactive output as a fraction of rated kVA; positive = injecting vars.
    pub fn reactive_fraction<T: Scalar>(&self, v_pu: T) -> T {
        let (v1, v2, v3, v4) = (T::of(self.v1), T::of(self.v2), T::of(self.v3), T::of(self.v4));
        if v_pu <= v1 {
            T::one()
        } else if v_pu < v2 {
            (v2 - v_pu) / (v2 - v1)
        } else if v_pu <= v3 {
            T::zero()
        } else if v_pu < v4 {
            -(v_pu - v3) / (v4 - v3)
        } else {
            -T::one()
        }
    }
}

/// Default-curve reactive fraction at `v_pu`.
pub fn apply_volt_var<T: Scalar>(v_pu: T) -> T {
    VoltVarCurve::default().reactive_fraction(v_pu)
}
