use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_n: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    /// Whole-word scale α in `X̂ = X_p + α·X_ω`.
    pub alpha: f64,
    pub beams: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_n: 64,
            heads: 4,
            d_ff: 128,
            enc_layers: 2,
            dec_layers: 2,
            alpha: 5.0,
            beams: 20,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_n == 0 || self.heads == 0 || !self.d_n.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_n ({}) must be a positive multiple of heads ({})",
                self.d_n, self.heads
            )));
        }
        if self.d_ff == 0 {
            return Err(Error::Config("d_ff must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.beams == 0 {
            return Err(Error::Config("beams must be >= 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_n / self.heads
    }

    /// `key=value` lines, the checkpoint's config block.
    pub fn to_text(&self) -> String {
        format!(
            "d_n={}\nheads={}\nd_ff={}\nenc_layers={}\ndec_layers={}\nalpha={:?}\nbeams={}\nseed={}\n",
            self.d_n, self.heads, self.d_ff, self.enc_layers, self.dec_layers, self.alpha, self.beams, self.seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line `{line}`")))?;
            let bad = || Error::Format(format!("bad value for `{k}`: `{v}`"));
            match k {
                "d_n" => cfg.d_n = v.parse().map_err(|_| bad())?,
                "heads" => cfg.heads = v.parse().map_err(|_| bad())?,
                "d_ff" => cfg.d_ff = v.parse().map_err(|_| bad())?,
                "enc_layers" => cfg.enc_layers = v.parse().map_err(|_| bad())?,
                "dec_layers" => cfg.dec_layers = v.parse().map_err(|_| bad())?,
                "alpha" => cfg.alpha = v.parse().map_err(|_| bad())?,
                "beams" => cfg.beams = v.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::Format(format!("unknown model key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            heads: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            alpha: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            beams: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let cfg = ModelConfig {
            alpha: 0.1 + 0.2,
            seed: 77,
            ..Default::default()
        };
        assert_eq!(ModelConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }
}
