use super::OcpError;

/// Sampled solution of an optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub lambda: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        x: Vec<Vec<f64>>,
        u: Vec<Vec<f64>>,
        p: Vec<f64>,
        lambda: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, OcpError> {
        let traj = Self { times, x, u, p, lambda };
        traj.validate()?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        let n = self.times.len();
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(OcpError::InvalidTrajectory("times are not strictly increasing".into()));
        }
        let check = |what: &str, v: &[Vec<f64>]| -> Result<(), OcpError> {
            if v.len() != n {
                return Err(OcpError::InvalidTrajectory(format!(
                    "{what} has {} samples, expected {n}",
                    v.len()
                )));
            }
            if let Some(first) = v.first() {
                if v.iter().any(|s| s.len() != first.len()) {
                    return Err(OcpError::InvalidTrajectory(format!(
                        "{what} samples have inconsistent lengths"
                    )));
                }
            }
            Ok(())
        };
        check("x", &self.x)?;
        check("u", &self.u)?;
        if let Some(l) = &self.lambda {
            check("lambda", l)?;
        }
        Ok(())
    }

    /// Largest absolute difference of states and controls at common samples.
    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        let mut m: f64 = 0.0;
        for (a, b) in self.x.iter().zip(&other.x).chain(self.u.iter().zip(&other.u)) {
            for (p, q) in a.iter().zip(b) {
                m = m.max((p - q).abs());
            }
        }
        for (p, q) in self.p.iter().zip(&other.p) {
            m = m.max((p - q).abs());
        }
        m
    }
}
