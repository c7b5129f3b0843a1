//! Parametric policies over the encoded agent state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AgentAction, AgentState, Controller, SkillFamily};
use crate::error::AgentError;
use crate::Vec3;

pub const DIRECTION_INPUTS: usize = 6;
pub const WIPE_INPUTS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    /// `y = W x + b`
    Linear { inputs: usize, outputs: usize },
    /// `y = W2 tanh(W1 x + b1) + b2`
    Mlp { inputs: usize, hidden: usize, outputs: usize },
}

impl Architecture {
    pub fn for_family(family: SkillFamily, hidden: Option<usize>) -> Result<Architecture, AgentError> {
        let (inputs, outputs) = match family {
            SkillFamily::Direction => (DIRECTION_INPUTS, 3),
            SkillFamily::Wipe => (WIPE_INPUTS, 1),
            SkillFamily::Position => {
                return Err(AgentError::Unsupported("position skills have nothing to learn".into()))
            }
        };
        Ok(match hidden {
            None | Some(0) => Architecture::Linear { inputs, outputs },
            Some(h) => Architecture::Mlp {
                inputs,
                hidden: h,
                outputs,
            },
        })
    }

    pub fn parameter_count(&self) -> usize {
        match *self {
            Architecture::Linear { inputs, outputs } => outputs * (inputs + 1),
            Architecture::Mlp { inputs, hidden, outputs } => hidden * (inputs + 1) + outputs * (hidden + 1),
        }
    }

    pub fn inputs(&self) -> usize {
        match *self {
            Architecture::Linear { inputs, .. } | Architecture::Mlp { inputs, .. } => inputs,
        }
    }

    pub fn outputs(&self) -> usize {
        match *self {
            Architecture::Linear { outputs, .. } | Architecture::Mlp { outputs, .. } => outputs,
        }
    }
}

/// Direction skills: `[c, f_n]`. Wipe: `[n, Δd, f_n, f_desc/f_max,
/// (f_n·n) f_desc/f_max]`.
pub fn encode(state: &AgentState) -> Vec<f64> {
    match *state {
        AgentState::Direction { c, f_n, .. } => vec![c.x, c.y, c.z, f_n.x, f_n.y, f_n.z],
        AgentState::Wipe {
            n, dd, f_n, f_desc, f_max, ..
        } => {
            let e = f64::from(f_desc) / f64::from(f_max.max(1));
            vec![n.x, n.y, n.z, dd.x, dd.y, dd.z, f_n.x, f_n.y, f_n.z, e, f_n.dot(&n) * e]
        }
        AgentState::Position => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub skill: String,
    pub architecture: Architecture,
    pub parameters: Vec<f64>,
    pub seed: u64,
}

impl Policy {
    pub fn zeros(skill: &str, architecture: Architecture, seed: u64) -> Policy {
        Policy {
            skill: skill.to_string(),
            architecture,
            parameters: vec![0.0; architecture.parameter_count()],
            seed,
        }
    }

    pub fn check(&self) -> Result<(), AgentError> {
        if self.parameters.len() != self.architecture.parameter_count() {
            return Err(AgentError::PolicyMismatch(format!(
                "{} parameters for an architecture that takes {}",
                self.parameters.len(),
                self.architecture.parameter_count()
            )));
        }
        if self.parameters.iter().any(|p| !p.is_finite()) {
            return Err(AgentError::PolicyMismatch("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, AgentError> {
        if x.len() != self.architecture.inputs() {
            return Err(AgentError::PolicyMismatch(format!(
                "state has {} features, policy expects {}",
                x.len(),
                self.architecture.inputs()
            )));
        }
        let p = &self.parameters;
        let x = DVector::from_column_slice(x);
        let layer = |offset: usize, rows: usize, cols: usize, input: &DVector<f64>| {
            let w = DMatrix::from_row_slice(rows, cols, &p[offset..offset + rows * cols]);
            let b = DVector::from_column_slice(&p[offset + rows * cols..offset + rows * (cols + 1)]);
            w * input + b
        };
        let y = match self.architecture {
            Architecture::Linear { inputs, outputs } => layer(0, outputs, inputs, &x),
            Architecture::Mlp { inputs, hidden, outputs } => {
                let h = layer(0, hidden, inputs, &x).map(f64::tanh);
                layer(hidden * (inputs + 1), outputs, hidden, &h)
            }
        };
        Ok(y.iter().copied().collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Policy, AgentError> {
        let p: Policy = serde_json::from_str(text)?;
        p.check()?;
        Ok(p)
    }
}

/// Runs a policy as a controller. Wipe outputs are in units of
/// `step_size`.
#[derive(Clone, Debug)]
pub struct PolicyController {
    pub policy: Policy,
    pub step_size: f64,
}

impl Controller for PolicyController {
    fn act(&mut self, state: &AgentState) -> Result<AgentAction, AgentError> {
        match state {
            AgentState::Position => Ok(AgentAction::None),
            AgentState::Direction { .. } => {
                let y = self.policy.forward(&encode(state))?;
                Ok(AgentAction::Direction(Vec3::new(y[0], y[1], y[2])))
            }
            AgentState::Wipe { .. } => {
                let y = self.policy.forward(&encode(state))?;
                Ok(AgentAction::Normal(y[0] * self.step_size))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(Architecture::Linear { inputs: 6, outputs: 3 }.parameter_count(), 21);
        let mlp = Architecture::Mlp {
            inputs: 6,
            hidden: 4,
            outputs: 3,
        };
        assert_eq!(mlp.parameter_count(), 4 * 7 + 3 * 5);
    }

    #[test]
    fn linear_forward_by_hand() {
        let arch = Architecture::Linear { inputs: 2, outputs: 1 };
        let p = Policy {
            skill: "PR-PR".into(),
            architecture: arch,
            parameters: vec![2.0, -1.0, 0.5],
            seed: 0,
        };
        assert_eq!(p.forward(&[3.0, 4.0]).unwrap(), vec![2.5]);
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn mlp_forward_by_hand() {
        let arch = Architecture::Mlp {
            inputs: 1,
            hidden: 1,
            outputs: 1,
        };
        let p = Policy {
            skill: "PR-PR".into(),
            architecture: arch,
            parameters: vec![1.0, 0.0, 2.0, 1.0],
            seed: 0,
        };
        let y = p.forward(&[0.5]).unwrap()[0];
        assert!((y - (2.0 * 0.5f64.tanh() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let p = Policy::zeros("PR-PR", Architecture::for_family(SkillFamily::Direction, None).unwrap(), 3);
        let back = Policy::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let mut bad = p.clone();
        bad.parameters.pop();
        assert!(Policy::from_json(&bad.to_json()).is_err());
    }
}
