use crate::error::{Error, Result};

/// How a histogram was brought to unit baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// `|τ|` interval whose mean count defines the baseline. `None` when the
    /// constant came from the rate-squared estimate of a single stream.
    pub region: Option<(f64, f64)>,
    /// Counts per bin corresponding to a normalized value of 1.
    pub constant: f64,
}

/// Binned start-stop (or pair) delay counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_centers: Vec<f64>,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub normalization: Option<Normalization>,
    /// Set when a rebin dropped a trailing partial group.
    pub truncated: bool,
}

impl CorrelationHistogram {
    /// Empty histogram with `n_bins` bins starting at the left edge `tau_min`.
    pub fn with_edges(tau_min: f64, bin_width: f64, n_bins: usize) -> Self {
        let bin_centers = (0..n_bins)
            .map(|i| tau_min + (i as f64 + 0.5) * bin_width)
            .collect();
        CorrelationHistogram {
            bin_centers,
            bin_width,
            counts: vec![0; n_bins],
            normalization: None,
            truncated: false,
        }
    }

    /// Histogram covering `[tau_min, tau_max)`.
    pub fn for_range(tau_min: f64, tau_max: f64, bin_width: f64) -> Result<Self> {
        if !(tau_max > tau_min) || !(bin_width > 0.0) {
            return Err(Error::input(format!(
                "bad histogram range [{tau_min}, {tau_max}) with bin width {bin_width}"
            )));
        }
        let n = ((tau_max - tau_min) / bin_width).round() as usize;
        Ok(Self::with_edges(tau_min, bin_width, n))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn tau_min(&self) -> f64 {
        self.bin_centers.first().map_or(0.0, |c| c - 0.5 * self.bin_width)
    }

    pub fn tau_max(&self) -> f64 {
        self.bin_centers.last().map_or(0.0, |c| c + 0.5 * self.bin_width)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin index for a delay, if it falls inside the histogram.
    #[inline]
    pub fn bin_of(&self, tau: f64) -> Option<usize> {
        let x = (tau - self.tau_min()) / self.bin_width;
        if x >= 0.0 && x < self.counts.len() as f64 {
            Some(x as usize)
        } else {
            None
        }
    }

    #[inline]
    pub fn record(&mut self, tau: f64) -> bool {
        match self.bin_of(tau) {
            Some(i) => {
                self.counts[i] += 1;
                true
            }
            None => false,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization.is_some()
    }

    /// Normalized values, if a normalization has been applied.
    pub fn normalized_values(&self) -> Option<Vec<f64>> {
        self.normalization
            .map(|n| self.counts.iter().map(|&c| c as f64 / n.constant).collect())
    }

    /// Poisson standard error of each normalized value.
    pub fn normalized_sigmas(&self) -> Option<Vec<f64>> {
        self.normalization.map(|n| {
            self.counts
                .iter()
                .map(|&c| (c as f64).sqrt() / n.constant)
                .collect()
        })
    }

    pub fn same_geometry(&self, other: &CorrelationHistogram) -> bool {
        let tol = 1e-9 * self.bin_width.abs().max(1e-300);
        self.counts.len() == other.counts.len()
            && (self.bin_width - other.bin_width).abs() <= tol
            && self
                .bin_centers
                .iter()
                .zip(&other.bin_centers)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn check_geometry(&self, other: &CorrelationHistogram) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{} bins of {} ns from {} vs {} bins of {} ns from {}",
                self.len(),
                self.bin_width,
                self.tau_min(),
                other.len(),
                other.bin_width,
                other.tau_min()
            )))
        }
    }

    /// Add another histogram's counts. Drops any normalization.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        self.check_geometry(other)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.normalization = None;
        self.truncated |= other.truncated;
        Ok(())
    }
}
