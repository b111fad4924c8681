//! Credential hashing, tokens and identifiers.

use pbkdf2::pbkdf2_hmac;
use rand::Rng;
use sha2::Sha256;

pub const MIN_CREDENTIAL_CHARS: usize = 8;
pub const MAX_NAME_CHARS: usize = 64;

const SALT_BYTES: usize = 16;
const HASH_BYTES: usize = 32;
const SCHEME: &str = "pbkdf2-sha256";

fn random_hex(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::rng().fill(buf.as_mut_slice());
    hex::encode(buf)
}

/// 128-bit random session token, hex encoded.
pub fn new_token() -> String {
    random_hex(16)
}

pub fn new_user_id() -> String {
    format!("u{}", random_hex(8))
}

/// Salted hash in the form `pbkdf2-sha256$<iterations>$<salt hex>$<hash hex>`.
pub fn hash_credential(credential: &str, iterations: u32) -> String {
    let salt = random_hex(SALT_BYTES);
    let hash = derive(credential, salt.as_bytes(), iterations);
    format!("{SCHEME}${iterations}${salt}${}", hex::encode(hash))
}

fn derive(credential: &str, salt: &[u8], iterations: u32) -> [u8; HASH_BYTES] {
    let mut out = [0u8; HASH_BYTES];
    pbkdf2_hmac::<Sha256>(credential.as_bytes(), salt, iterations, &mut out);
    out
}

pub fn verify_credential(stored: &str, credential: &str) -> bool {
    let mut parts = stored.split('$');
    let (Some(SCHEME), Some(iters), Some(salt), Some(hash), None) =
        (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return false;
    };
    let (Ok(iterations), Ok(expected)) = (iters.parse::<u32>(), hex::decode(hash)) else {
        return false;
    };
    if iterations == 0 || expected.len() != HASH_BYTES {
        return false;
    }
    let actual = derive(credential, salt.as_bytes(), iterations);
    actual
        .iter()
        .zip(&expected)
        .fold(0u8, |acc, (a, b)| acc | (a ^ b))
        == 0
}
