//! Additive arithmetic shares over Z_{2^ell} and XOR boolean shares.

use super::Party;
use crate::fixed_ring::{RingParams, RingTensor};
use rand::RngCore;

/// One party's additive share of a RingTensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareTensor {
    pub party: Party,
    pub inner: RingTensor,
}

impl ShareTensor {
    pub fn params(&self) -> RingParams {
        self.inner.params
    }

    pub fn rows(&self) -> usize {
        self.inner.rows
    }

    pub fn cols(&self) -> usize {
        self.inner.cols
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    /// Share of zero with the given shape.
    pub fn zero(party: Party, params: RingParams, rows: usize, cols: usize) -> ShareTensor {
        ShareTensor {
            party,
            inner: RingTensor::zeros(params, rows, cols),
        }
    }

    /// Share of a public tensor: the client holds the value, the server zero.
    pub fn of_public(party: Party, t: &RingTensor) -> ShareTensor {
        match party {
            Party::Client => ShareTensor {
                party,
                inner: t.clone(),
            },
            Party::Server => ShareTensor::zero(party, t.params, t.rows, t.cols),
        }
    }

    /// Local share addition (both parties apply it).
    pub fn add(&self, other: &ShareTensor) -> ShareTensor {
        assert_eq!(self.party, other.party);
        ShareTensor {
            party: self.party,
            inner: self.inner.add(&other.inner).expect("share shapes match"),
        }
    }

    /// Local share subtraction (both parties apply it).
    pub fn sub(&self, other: &ShareTensor) -> ShareTensor {
        assert_eq!(self.party, other.party);
        ShareTensor {
            party: self.party,
            inner: self.inner.sub(&other.inner).expect("share shapes match"),
        }
    }

    /// Multiply by a public residue (both parties apply it).
    pub fn mul_public(&self, c: u64) -> ShareTensor {
        ShareTensor {
            party: self.party,
            inner: self.inner.scalar_mul(c),
        }
    }

    /// Add a public tensor to the reconstruction: only the client offsets
    /// its share; the server's is unchanged.
    pub fn add_public(&self, t: &RingTensor) -> ShareTensor {
        match self.party {
            Party::Client => ShareTensor {
                party: self.party,
                inner: self.inner.add(t).expect("shapes match"),
            },
            Party::Server => self.clone(),
        }
    }

    /// Add a single public residue to every element of the reconstruction
    /// (client-side offset).
    pub fn add_public_residue(&self, c: u64) -> ShareTensor {
        match self.party {
            Party::Client => {
                let mut inner = self.inner.clone();
                let mask = inner.params.mask();
                for v in &mut inner.data {
                    *v = v.wrapping_add(c) & mask;
                }
                ShareTensor {
                    party: self.party,
                    inner,
                }
            }
            Party::Server => self.clone(),
        }
    }
}

/// Split x into (client, server) shares; the client share is uniform.
pub fn share(x: &RingTensor, rng: &mut impl RngCore) -> (ShareTensor, ShareTensor) {
    let params = x.params;
    let mask = params.mask();
    let client_data: Vec<u64> = (0..x.data.len()).map(|_| rng.next_u64() & mask).collect();
    let server_data: Vec<u64> = x
        .data
        .iter()
        .zip(&client_data)
        .map(|(&v, &c)| v.wrapping_sub(c) & mask)
        .collect();
    (
        ShareTensor {
            party: Party::Client,
            inner: RingTensor::from_residues(params, x.rows, x.cols, client_data).unwrap(),
        },
        ShareTensor {
            party: Party::Server,
            inner: RingTensor::from_residues(params, x.rows, x.cols, server_data).unwrap(),
        },
    )
}

/// Sum of the two shares mod 2^ell.
pub fn reconstruct(c: &ShareTensor, s: &ShareTensor) -> RingTensor {
    assert_eq!(c.party, Party::Client);
    assert_eq!(s.party, Party::Server);
    c.inner.add(&s.inner).expect("share shapes match")
}

/// One party's XOR share of a bit tensor (one byte per bit, values 0/1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolShare {
    pub party: Party,
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u8>,
}

impl BoolShare {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// XOR with another bool share of the same party (local operation).
    pub fn xor_local(&self, other: &BoolShare) -> BoolShare {
        assert_eq!(self.bits.len(), other.bits.len());
        BoolShare {
            party: self.party,
            rows: self.rows,
            cols: self.cols,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a ^ b)
                .collect(),
        }
    }

    /// Flip every bit (only one party does this to negate the shared bit).
    pub fn flip(&self) -> BoolShare {
        BoolShare {
            party: self.party,
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|&b| b ^ 1).collect(),
        }
    }
}

/// XOR-share a vector of bits; the client share is uniform.
pub fn share_bits(
    bits: &[u8],
    rows: usize,
    cols: usize,
    rng: &mut impl RngCore,
) -> (BoolShare, BoolShare) {
    let client: Vec<u8> = (0..bits.len()).map(|_| (rng.next_u32() & 1) as u8).collect();
    let server: Vec<u8> = bits.iter().zip(&client).map(|(&b, &c)| b ^ c).collect();
    (
        BoolShare {
            party: Party::Client,
            rows,
            cols,
            bits: client,
        },
        BoolShare {
            party: Party::Server,
            rows,
            cols,
            bits: server,
        },
    )
}

pub fn reconstruct_bits(c: &BoolShare, s: &BoolShare) -> Vec<u8> {
    assert_eq!(c.party, Party::Client);
    assert_eq!(s.party, Party::Server);
    c.bits.iter().zip(&s.bits).map(|(&a, &b)| a ^ b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn share_reconstruct_round_trip() {
        let params = RingParams::new(32, 12).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = RingTensor::from_residues(
                params,
                2,
                3,
                (0..6).map(|_| rand::Rng::gen::<u64>(&mut rng)).collect(),
            )
            .unwrap();
            let (c, s) = share(&x, &mut rng);
            assert_eq!(reconstruct(&c, &s).data, x.data);
        }
    }

    #[test]
    fn share_exhaustive_ell4() {
        let params = RingParams::new(4, 0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for v in 0u64..16 {
            let x = RingTensor::from_residues(params, 1, 1, vec![v]).unwrap();
            for _ in 0..16 {
                let (c, s) = share(&x, &mut rng);
                assert_eq!(reconstruct(&c, &s).data[0], v);
            }
        }
    }

    #[test]
    fn share_of_zero_is_masked() {
        // the client share of zero is not systematically zero
        let params = RingParams::new(32, 0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = RingTensor::zeros(params, 1, 8);
        let (c, _s) = share(&x, &mut rng);
        assert!(c.inner.data.iter().any(|&v| v != 0));
    }

    #[test]
    fn bool_share_round_trip_and_ops() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let bits = vec![0u8, 1, 1, 0, 1];
        let (c, s) = share_bits(&bits, 1, 5, &mut rng);
        assert_eq!(reconstruct_bits(&c, &s), bits);
        // flipping one share negates the shared bit
        let flipped = reconstruct_bits(&c.flip(), &s);
        assert_eq!(
            flipped,
            bits.iter().map(|&b| b ^ 1).collect::<Vec<_>>()
        );
        // local XOR of two sharings reconstructs to XOR of the values
        let bits2 = vec![1u8, 1, 0, 0, 1];
        let (c2, s2) = share_bits(&bits2, 1, 5, &mut rng);
        let got = reconstruct_bits(&c.xor_local(&c2), &s.xor_local(&s2));
        let want: Vec<u8> = bits.iter().zip(&bits2).map(|(&a, &b)| a ^ b).collect();
        assert_eq!(got, want);
    }
}
