use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Any component above this magnitude counts as blow-up.
pub const BLOWUP: f64 = 1e10;

/// Sampled continuous-time trajectory. Snapshots stop at blow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Either empty or one input snapshot per time.
    pub inputs: Vec<Vec<f64>>,
    /// Time at which some component first exceeded [`BLOWUP`].
    pub blow_up: Option<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>, blow_up: Option<f64>) -> Result<Trajectory> {
        if times.len() != states.len() {
            return Err(Error::Shape { expected: times.len(), got: states.len() });
        }
        if !inputs.is_empty() && inputs.len() != times.len() {
            return Err(Error::Shape { expected: times.len(), got: inputs.len() });
        }
        if let Some(s) = states.first() {
            if let Some(bad) = states.iter().find(|x| x.len() != s.len()) {
                return Err(Error::Shape { expected: s.len(), got: bad.len() });
            }
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("times must increase".into()));
        }
        Ok(Trajectory { times, states, inputs, blow_up })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(|v| v.as_slice())
    }

    /// Common step if the samples are uniform to 1e-9 relative.
    pub fn uniform_dt(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt)
            .then_some(dt)
    }

    /// Apply `f` to every snapshot.
    pub fn map<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        self.states.iter().map(|x| f(x)).collect()
    }

    /// CSV with columns t, x_1..x_N.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.states.first().map_or(0, |v| v.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["t".to_string()];
        head.extend((1..=n).map(|i| format!("x_{i}")));
        wr.write_record(&head)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut rec = vec![t.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_checked() {
        assert!(Trajectory::new(vec![0.0, 1.0], vec![vec![1.0]], vec![], None).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]], vec![], None).is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]], vec![], None).is_err());
        let t = Trajectory::new(vec![0.0, 0.5, 1.0], vec![vec![1.0]; 3], vec![], None).unwrap();
        assert_eq!(t.uniform_dt(), Some(0.5));
        let mut buf = vec![];
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x_1\n0,1\n0.5,1\n1,1\n");
    }
}
