use crate::codec::{entries_from_bits, entries_to_bits, BitVec, SemanticBitstream};
use crate::num::RngStream;

use super::HarnessError;

/// Transmission model for coded streams. Headers and Huffman tables are
/// always protected; only concept payloads and the label map traverse
/// the noisy channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    Lossless,
    Awgn { snr_db: f64 },
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            ChannelSpec::Lossless => Ok(()),
            ChannelSpec::Awgn { snr_db } if snr_db.is_finite() => Ok(()),
            ChannelSpec::Awgn { snr_db } => {
                Err(HarnessError::Config(format!("SNR must be finite, got {snr_db}")))
            }
        }
    }
}

/// BPSK over additive white Gaussian noise with per-bit hard decision:
/// bits map to +/-1, noise of variance 1/(2 * 10^(snr/10)) is added, and
/// the sign is detected.
pub fn awgn_transmit(bits: &BitVec, snr_db: f64, rng: &mut RngStream) -> BitVec {
    let snr_linear = 10f64.powf(snr_db / 10.0);
    let sigma = (1.0 / (2.0 * snr_linear)).sqrt();
    let mut out = BitVec::new();
    for bit in bits.iter() {
        let x = if bit { 1.0 } else { -1.0 };
        out.push(x + sigma * rng.normal() >= 0.0);
    }
    out
}

/// Sends a whole stream through the channel. The amount of randomness
/// drawn depends only on the stream's bit counts, so evaluations at
/// different SNRs can share one noise stream (common random numbers).
pub fn transmit(
    stream: &SemanticBitstream,
    spec: &ChannelSpec,
    rng: &mut RngStream,
) -> Result<SemanticBitstream, HarnessError> {
    spec.validate()?;
    let snr_db = match spec {
        ChannelSpec::Lossless => return Ok(stream.clone()),
        ChannelSpec::Awgn { snr_db } => *snr_db,
    };
    let mut received = stream.clone();
    for seg in &mut received.segments {
        seg.payload = awgn_transmit(&seg.payload, snr_db, rng);
    }
    let label_bits = entries_to_bits(&stream.label_entries);
    received.label_entries = entries_from_bits(&awgn_transmit(&label_bits, snr_db, rng));
    Ok(received)
}

/// Gaussian tail probability Q(x), the closed-form BER predictor for
/// BPSK: BER = Q(sqrt(2 * snr_linear)).
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Complementary error function, Abramowitz & Stegun 7.1.26 rational
/// approximation (absolute error below 1.5e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * z);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let tail = poly * (-z * z).exp();
    if x >= 0.0 {
        tail
    } else {
        2.0 - tail
    }
}
