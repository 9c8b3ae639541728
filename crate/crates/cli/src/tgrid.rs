use std::fmt;
use std::str::FromStr;

use serde::Serialize;

/// `START:STOP:POINTS[,log|,lin]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub log: bool,
}

impl TGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let n = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let f = i as f64 / n;
                if i + 1 == self.points {
                    self.stop
                } else if self.log {
                    let (a, b) = (self.start.log10(), self.stop.log10());
                    10f64.powf(a + f * (b - a))
                } else {
                    self.start + f * (self.stop - self.start)
                }
            })
            .collect()
    }
}

impl FromStr for TGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (range, scale) = match s.split_once(',') {
            Some((r, sc)) => (r, sc.trim()),
            None => (s, "lin"),
        };
        let log = match scale {
            "log" => true,
            "lin" => false,
            other => return Err(format!("unknown scale {other:?}, expected log or lin")),
        };
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err("expected START:STOP:POINTS[,log]".into());
        }
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad number {x:?}"));
        let start = num(parts[0])?;
        let stop = num(parts[1])?;
        let points: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| format!("bad point count {:?}", parts[2]))?;
        if points == 0 {
            return Err("POINTS must be at least 1".into());
        }
        if !(start.is_finite() && stop.is_finite() && start <= stop) {
            return Err("need finite START <= STOP".into());
        }
        if log && !(start > 0.0) {
            return Err("log grid needs START > 0".into());
        }
        Ok(TGrid {
            start,
            stop,
            points,
            log,
        })
    }
}

impl fmt::Display for TGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = if self.log { "log" } else { "lin" };
        write!(f, "{}:{}:{},{scale}", self.start, self.stop, self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_endpoints() {
        let g: TGrid = "10:1e12:12,log".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 12);
        assert_eq!(v[0], 10.0);
        assert_eq!(v[11], 1e12);
        assert!((v[1] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn linear_is_default() {
        let g: TGrid = "0:1:5".parse().unwrap();
        assert_eq!(g.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn rejects_bad_specs() {
        for s in ["1:2", "2:1:3", "0:1:3,log", "1:2:0", "1:2:3,cubic", "a:2:3"] {
            assert!(s.parse::<TGrid>().is_err(), "{s}");
        }
    }
}
