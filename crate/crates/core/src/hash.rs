use tiny_keccak::{Hasher, Keccak};

/// Keccak-256 as used by the EVM (not NIST SHA3-256).
pub fn keccak256(data: &[u8]) -> [u8; 32] {
    let mut hasher = Keccak::v256();
    hasher.update(data);
    let mut out = [0u8; 32];
    hasher.finalize(&mut out);
    out
}

/// Canonical ERC-721 `Transfer` event signature.
pub const TRANSFER_SIGNATURE: &str = "Transfer(address,address,uint256)";

/// Topic 0 of a `Transfer(address,address,uint256)` log.
pub fn transfer_topic() -> [u8; 32] {
    keccak256(TRANSFER_SIGNATURE.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_digest() {
        assert_eq!(
            hex::encode(keccak256(b"")),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
    }
}
