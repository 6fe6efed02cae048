/// Cosine annealing with warm restarts: period `t0`, growing by `t_mult`
/// after each restart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub lr_max: f64,
    pub eta_min: f64,
    pub t0: f64,
    pub t_mult: f64,
}

impl Schedule {
    /// `(T_cur, T_i)` at a (possibly fractional) epoch.
    pub fn position(&self, epoch: f64) -> (f64, f64) {
        let epoch = epoch.max(0.0);
        if self.t_mult == 1.0 {
            let t_cur = epoch % self.t0;
            return (t_cur, self.t0);
        }
        // start of cycle i is t0 (m^i - 1) / (m - 1)
        let m = self.t_mult;
        let i = ((epoch * (m - 1.0) / self.t0 + 1.0).ln() / m.ln()).floor().max(0.0);
        let mut start = self.t0 * (m.powf(i) - 1.0) / (m - 1.0);
        let mut len = self.t0 * m.powf(i);
        // guard the floating floor at exact boundaries
        if epoch < start {
            len /= m;
            start -= len;
        } else if epoch >= start + len {
            start += len;
            len *= m;
        }
        (epoch - start, len)
    }

    pub fn lr(&self, epoch: f64) -> f64 {
        let (t_cur, t_i) = self.position(epoch);
        self.at(t_cur, t_i)
    }

    /// `η_min + ½(η_max − η_min)(1 + cos(π T_cur / T_i))`.
    pub fn at(&self, t_cur: f64, t_i: f64) -> f64 {
        self.eta_min + 0.5 * (self.lr_max - self.eta_min) * (1.0 + (std::f64::consts::PI * t_cur / t_i).cos())
    }

    /// Epochs at which a new cycle starts, up to `horizon`.
    pub fn restarts(&self, horizon: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let (mut start, mut len) = (0.0, self.t0);
        while start <= horizon {
            out.push(start);
            start += len;
            len *= self.t_mult;
        }
        out
    }
}
