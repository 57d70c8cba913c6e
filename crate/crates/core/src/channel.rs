//! Rayleigh-fading channel ensembles and the imperfect-CSI error model.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::{complex_normal, stream};
use crate::system::SystemConfig;

/// The four links of the system.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// BS to RIS, `N x N_t`.
    pub h1: ComplexMatrix,
    /// RIS to users, `N x M`; column `m` is user `m`'s RIS channel.
    pub h2: ComplexMatrix,
    /// BS to users, `N_t x M`; column `m` is user `m`'s direct channel.
    pub hd: ComplexMatrix,
    /// RIS back to the BS receiver, `N_r x N`.
    pub hb: ComplexMatrix,
}

impl ChannelSet {
    pub fn n_tx(&self) -> usize {
        self.h1.cols()
    }

    pub fn n_rx(&self) -> usize {
        self.hb.rows()
    }

    pub fn n_elements(&self) -> usize {
        self.h1.rows()
    }

    pub fn n_users(&self) -> usize {
        self.h2.cols()
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        let expected = [
            ("h1", self.h1.shape(), (cfg.n_elements, cfg.n_tx)),
            ("h2", self.h2.shape(), (cfg.n_elements, cfg.n_users)),
            ("hd", self.hd.shape(), (cfg.n_tx, cfg.n_users)),
            ("hb", self.hb.shape(), (cfg.n_rx, cfg.n_elements)),
        ];
        for (name, got, want) in expected {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        Ok(())
    }

    fn matrices(&self) -> [&ComplexMatrix; 4] {
        [&self.h1, &self.h2, &self.hd, &self.hb]
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, variance))
}

/// Draws every channel entry i.i.d. from `CN(0, 1)`.
///
/// Each matrix has its own sub-stream, so changing `N` leaves the direct
/// channel `hd` untouched.
pub fn generate_channels(cfg: &SystemConfig, seed: u64) -> ChannelSet {
    let (n, nt, nr, m) = (cfg.n_elements, cfg.n_tx, cfg.n_rx, cfg.n_users);
    ChannelSet {
        h1: gaussian_matrix(n, nt, 1.0, &mut stream(seed, "h1")),
        h2: gaussian_matrix(n, m, 1.0, &mut stream(seed, "h2")),
        hd: gaussian_matrix(nt, m, 1.0, &mut stream(seed, "hd")),
        hb: gaussian_matrix(nr, n, 1.0, &mut stream(seed, "hb")),
    }
}

/// Estimation error `H_e = H + E` with `E` entries i.i.d. `CN(0, delta^2 N0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsiErrorModel {
    pub delta: f64,
    pub noise_power: f64,
}

impl CsiErrorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::config("delta", format!("must be non-negative, got {}", self.delta)));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::config(
                "noise_power",
                format!("must be positive, got {}", self.noise_power),
            ));
        }
        Ok(())
    }

    pub fn error_variance(&self) -> f64 {
        self.delta * self.delta * self.noise_power
    }
}

/// Returns the channels the optimizer would see under `model`.
pub fn perturb_csi(truth: &ChannelSet, model: &CsiErrorModel, seed: u64) -> Result<ChannelSet> {
    model.validate()?;
    if model.delta == 0.0 {
        return Ok(truth.clone());
    }
    let var = model.error_variance();
    let perturb = |h: &ComplexMatrix, tag: &str| {
        let e = gaussian_matrix(h.rows(), h.cols(), var, &mut stream(seed, tag));
        h + &e
    };
    Ok(ChannelSet {
        h1: perturb(&truth.h1, "csi-h1"),
        h2: perturb(&truth.h2, "csi-h2"),
        hd: perturb(&truth.hd, "csi-hd"),
        hb: perturb(&truth.hb, "csi-hb"),
    })
}

/// Squared Frobenius distance summed over the four links.
pub fn squared_error(a: &ChannelSet, b: &ChannelSet) -> f64 {
    a.matrices()
        .iter()
        .zip(b.matrices())
        .map(|(x, y)| {
            x.as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(p, q)| (p - q).norm_sqr())
                .sum::<f64>()
        })
        .sum()
}
