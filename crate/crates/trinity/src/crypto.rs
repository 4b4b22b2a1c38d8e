//! Keyed hashing and authenticated encryption shared by the modules.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hmac::{Hmac, Mac};
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

pub const NONCE_LEN: usize = 12;

/// HMAC-SHA256 with the key schedule computed once.
#[derive(Clone)]
pub struct Prf(HmacSha256);

impl Prf {
    pub fn new(key: &[u8]) -> Self {
        Prf(<HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length"))
    }

    pub fn eval(&self, parts: &[&[u8]]) -> [u8; 32] {
        let mut m = self.0.clone();
        for p in parts {
            m.update(p);
        }
        m.finalize().into_bytes().into()
    }

    pub fn eval16(&self, parts: &[&[u8]]) -> [u8; 16] {
        self.eval(parts)[..16].try_into().unwrap()
    }
}

pub fn prf(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    Prf::new(key).eval(parts)
}

pub fn seal(key: &[u8; 32], nonce: &[u8; NONCE_LEN], aad: &[u8], msg: &[u8]) -> Vec<u8> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(Nonce::from_slice(nonce), Payload { msg, aad })
        .expect("encryption of in-memory buffers cannot fail")
}

pub fn open(key: &[u8; 32], nonce: &[u8; NONCE_LEN], aad: &[u8], ct: &[u8]) -> Option<Vec<u8>> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .ok()
}

pub fn xor16(a: &mut [u8; 16], b: &[u8; 16]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x ^= y;
    }
}
