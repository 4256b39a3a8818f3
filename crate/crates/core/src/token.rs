//! Token and token-request wire formats.
//!
//! All integers are big-endian. Variable-length request fields carry a
//! 4-byte length prefix so that the request payload encoding is injective.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::{self, keccak256, Signature, SIGNATURE_LEN};

pub const TOKEN_LEN: usize = 86;
pub const ADDRESS_LEN: usize = 20;
/// One record of a token array: address followed by the token.
pub const TOKEN_RECORD_LEN: usize = ADDRESS_LEN + TOKEN_LEN;

/// `index` value of a token without the one-time property.
pub const NO_INDEX: i128 = -1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("request shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("bad token length: expected {TOKEN_LEN}, got {0}")]
    BadLength(usize),
    #[error("bad token type tag {0:#04x}")]
    BadType(u8),
    #[error("no token for address {0}")]
    NotFound(Address),
    #[error("malformed token array: {0}")]
    Malformed(String),
    #[error("duplicate address {0} in token array")]
    DuplicateAddress(Address),
    #[error("malformed signature: expected 65 bytes, got {0}")]
    MalformedSignature(usize),
    #[error("malformed calldata: {0}")]
    MalformedCalldata(String),
    #[error("invalid hex: {0}")]
    InvalidHex(String),
    #[error("invalid address: {0}")]
    InvalidAddress(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenType {
    Super = 0x01,
    Method = 0x02,
    Argument = 0x03,
}

impl TokenType {
    pub const ALL: [TokenType; 3] = [TokenType::Super, TokenType::Method, TokenType::Argument];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self, TokenError> {
        match tag {
            0x01 => Ok(TokenType::Super),
            0x02 => Ok(TokenType::Method),
            0x03 => Ok(TokenType::Argument),
            other => Err(TokenError::BadType(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenType::Super => "super",
            TokenType::Method => "method",
            TokenType::Argument => "argument",
        }
    }
}

impl fmt::Display for TokenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TokenType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "super" => Ok(TokenType::Super),
            "method" => Ok(TokenType::Method),
            "argument" => Ok(TokenType::Argument),
            other => Err(format!("unknown token type `{other}`")),
        }
    }
}

/// 20-byte account or contract address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    pub const ZERO: Address = Address([0; ADDRESS_LEN]);

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Address)
    }

    /// Address derived from a label, for fixtures and tests.
    pub fn derive(label: &str) -> Self {
        let digest = keccak256(label.as_bytes());
        let mut out = [0u8; ADDRESS_LEN];
        out.copy_from_slice(&digest[12..]);
        Address(out)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = TokenError;

    /// Requires the `0x` prefix; hex digits are case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or_else(|| TokenError::InvalidAddress(format!("`{s}` lacks 0x prefix")))?;
        let raw = hex::decode(body).map_err(|e| TokenError::InvalidAddress(format!("`{s}`: {e}")))?;
        Address::from_slice(&raw)
            .ok_or_else(|| TokenError::InvalidAddress(format!("`{s}` is {} bytes, need 20", raw.len())))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Deserializes a `FromStr` value without copying the input string.
struct ParseVisitor<T>(std::marker::PhantomData<T>, &'static str);

impl<T: FromStr<Err = TokenError>> serde::de::Visitor<'_> for ParseVisitor<T> {
    type Value = T;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.1)
    }

    fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<T, E> {
        v.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_str(ParseVisitor(std::marker::PhantomData, "a 0x-prefixed address"))
    }
}

/// 4-byte method selector: the first four bytes of the Keccak-256 digest of
/// the canonical method signature, e.g. `withdraw()`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodId(pub [u8; 4]);

impl MethodId {
    pub fn from_signature(signature: &str) -> Self {
        let digest = keccak256(signature.as_bytes());
        MethodId([digest[0], digest[1], digest[2], digest[3]])
    }

    /// Text form that goes into the request payload: `0x` and eight
    /// lowercase hex digits.
    pub fn string_form(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MethodId {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = crypto::decode_hex(s)?;
        let arr: [u8; 4] = raw
            .as_slice()
            .try_into()
            .map_err(|_| TokenError::InvalidHex(format!("method id `{s}` must be 4 bytes")))?;
        Ok(MethodId(arr))
    }
}

impl Serialize for MethodId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_str(ParseVisitor(std::marker::PhantomData, "a 0x-prefixed method id"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArgPair {
    pub name: String,
    pub value: String,
}

impl ArgPair {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        ArgPair { name: name.into(), value: value.into() }
    }
}

/// A client's token request: the token type plus its request payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenRequest {
    #[serde(rename = "type")]
    pub token_type: TokenType,
    #[serde(rename = "cAddr")]
    pub contract: Address,
    #[serde(rename = "sAddr")]
    pub sender: Address,
    #[serde(rename = "methodId", default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<ArgPair>,
}

impl TokenRequest {
    pub fn super_token(contract: Address, sender: Address) -> Self {
        TokenRequest { token_type: TokenType::Super, contract, sender, method: None, args: vec![] }
    }

    pub fn method_token(contract: Address, sender: Address, method: MethodId) -> Self {
        TokenRequest { token_type: TokenType::Method, contract, sender, method: Some(method), args: vec![] }
    }

    pub fn argument_token(contract: Address, sender: Address, method: MethodId, args: Vec<ArgPair>) -> Self {
        TokenRequest { token_type: TokenType::Argument, contract, sender, method: Some(method), args }
    }

    /// Checks which payload fields are present for the requested type.
    pub fn check_shape(&self) -> Result<(), TokenError> {
        match (self.token_type, self.method.is_some(), self.args.is_empty()) {
            (TokenType::Super, false, true) => {}
            (TokenType::Super, true, _) => return Err(TokenError::ShapeMismatch("super request carries a methodId")),
            (TokenType::Super, false, false) => return Err(TokenError::ShapeMismatch("super request carries arguments")),
            (TokenType::Method, true, true) => {}
            (TokenType::Method, false, _) => return Err(TokenError::ShapeMismatch("method request lacks methodId")),
            (TokenType::Method, true, false) => return Err(TokenError::ShapeMismatch("method request carries arguments")),
            (TokenType::Argument, true, false) => {}
            (TokenType::Argument, false, _) => return Err(TokenError::ShapeMismatch("argument request lacks methodId")),
            (TokenType::Argument, true, true) => return Err(TokenError::ShapeMismatch("argument request has no arguments")),
        }
        if self.args.iter().any(|a| a.name.is_empty()) {
            return Err(TokenError::ShapeMismatch("empty argument name"));
        }
        Ok(())
    }
}

fn put_prefixed(out: &mut Vec<u8>, field: &[u8]) {
    let len = u32::try_from(field.len()).expect("request field longer than u32::MAX");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(field);
}

/// Calldata encoding of an argument list; identical to the argument part of
/// the request payload so a guard can rebuild the payload from `msg.data`.
pub fn encode_args(args: &[ArgPair]) -> Vec<u8> {
    let mut out = Vec::new();
    for arg in args {
        put_prefixed(&mut out, arg.name.as_bytes());
        put_prefixed(&mut out, arg.value.as_bytes());
    }
    out
}

pub fn decode_args(mut data: &[u8]) -> Result<Vec<ArgPair>, TokenError> {
    fn take<'a>(data: &mut &'a [u8]) -> Result<&'a str, TokenError> {
        if data.len() < 4 {
            return Err(TokenError::MalformedCalldata("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes([data[0], data[1], data[2], data[3]]) as usize;
        let rest = &data[4..];
        if rest.len() < len {
            return Err(TokenError::MalformedCalldata("field overruns calldata".into()));
        }
        let (field, tail) = rest.split_at(len);
        *data = tail;
        std::str::from_utf8(field).map_err(|e| TokenError::MalformedCalldata(e.to_string()))
    }
    let mut args = Vec::new();
    while !data.is_empty() {
        let name = take(&mut data)?.to_owned();
        let value = take(&mut data)?.to_owned();
        args.push(ArgPair { name, value });
    }
    Ok(args)
}

/// Request payload: `cAddr ∥ sAddr ∥ [len ∥ methodId] ∥ (len ∥ name ∥ len ∥ value)*`.
pub fn encode_req_payload(req: &TokenRequest) -> Result<Vec<u8>, TokenError> {
    req.check_shape()?;
    let mut out = Vec::with_capacity(2 * ADDRESS_LEN + 14);
    out.extend_from_slice(&req.contract.0);
    out.extend_from_slice(&req.sender.0);
    if let Some(method) = req.method {
        put_prefixed(&mut out, method.string_form().as_bytes());
    }
    out.extend_from_slice(&encode_args(&req.args));
    Ok(out)
}

/// Bytes covered by the token signature: `type ∥ expire ∥ index ∥ reqPayload`.
pub fn signing_payload(token_type: TokenType, expire: u32, index: i128, req_payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(21 + req_payload.len());
    out.push(token_type.tag());
    out.extend_from_slice(&expire.to_be_bytes());
    out.extend_from_slice(&index.to_be_bytes());
    out.extend_from_slice(req_payload);
    out
}

/// An issued capability token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub token_type: TokenType,
    pub expire: u32,
    pub index: i128,
    pub signature: Signature,
}

impl Token {
    pub fn is_one_time(&self) -> bool {
        self.index >= 0
    }

    pub fn encode(&self) -> [u8; TOKEN_LEN] {
        let mut out = [0u8; TOKEN_LEN];
        out[0] = self.token_type.tag();
        out[1..5].copy_from_slice(&self.expire.to_be_bytes());
        out[5..21].copy_from_slice(&self.index.to_be_bytes());
        out[21..].copy_from_slice(&self.signature.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TokenError> {
        if bytes.len() != TOKEN_LEN {
            return Err(TokenError::BadLength(bytes.len()));
        }
        let token_type = TokenType::from_tag(bytes[0])?;
        let expire = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
        let index = i128::from_be_bytes(bytes[5..21].try_into().unwrap());
        let signature = Signature::from_slice(&bytes[21..21 + SIGNATURE_LEN])?;
        Ok(Token { token_type, expire, index, signature })
    }

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.encode()))
    }

    pub fn from_hex(s: &str) -> Result<Self, TokenError> {
        Token::decode(&crypto::decode_hex(s)?)
    }
}

pub fn encode_token(t: &Token) -> [u8; TOKEN_LEN] {
    t.encode()
}

pub fn decode_token(bytes: &[u8]) -> Result<Token, TokenError> {
    Token::decode(bytes)
}

/// Token array for call chains: a 2-byte count followed by
/// `address ∥ token` records of 106 bytes each.
pub fn encode_token_array(entries: &[(Address, Token)]) -> Result<Vec<u8>, TokenError> {
    let count = u16::try_from(entries.len())
        .map_err(|_| TokenError::Malformed(format!("{} entries exceed u16 count", entries.len())))?;
    let mut seen = HashSet::with_capacity(entries.len());
    let mut out = Vec::with_capacity(2 + entries.len() * TOKEN_RECORD_LEN);
    out.extend_from_slice(&count.to_be_bytes());
    for (addr, token) in entries {
        if !seen.insert(*addr) {
            return Err(TokenError::DuplicateAddress(*addr));
        }
        out.extend_from_slice(&addr.0);
        out.extend_from_slice(&token.encode());
    }
    Ok(out)
}

/// Result of a metered token-array lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub token: Result<Token, TokenError>,
    /// Bytes read during the scan, including the count header.
    pub bytes_scanned: usize,
}

/// Linear scan for the record belonging to `addr`, reporting bytes read.
pub fn extract_token_metered(array: &[u8], addr: &Address) -> Extracted {
    if array.len() < 2 {
        return Extracted {
            token: Err(TokenError::Malformed("missing count header".into())),
            bytes_scanned: array.len(),
        };
    }
    let count = u16::from_be_bytes([array[0], array[1]]) as usize;
    if array.len() != 2 + TOKEN_RECORD_LEN * count {
        return Extracted {
            token: Err(TokenError::Malformed(format!(
                "length {} does not match {count} records",
                array.len()
            ))),
            bytes_scanned: 2,
        };
    }
    let mut scanned = 2;
    for record in array[2..].chunks_exact(TOKEN_RECORD_LEN) {
        scanned += ADDRESS_LEN;
        if record[..ADDRESS_LEN] == addr.0 {
            scanned += TOKEN_LEN;
            return Extracted { token: Token::decode(&record[ADDRESS_LEN..]), bytes_scanned: scanned };
        }
    }
    Extracted { token: Err(TokenError::NotFound(*addr)), bytes_scanned: scanned }
}

pub fn extract_token(array: &[u8], addr: &Address) -> Result<Token, TokenError> {
    extract_token_metered(array, addr).token
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;

    fn a() -> Address {
        Address([0xaa; 20])
    }
    fn b() -> Address {
        Address([0xbb; 20])
    }

    fn dummy_token(index: i128) -> Token {
        Token { token_type: TokenType::Method, expire: 77, index, signature: Signature([7; 65]) }
    }

    #[test]
    fn super_payload_is_two_addresses() {
        let p = encode_req_payload(&TokenRequest::super_token(a(), b())).unwrap();
        assert_eq!(p.len(), 40);
        assert_eq!(&p[..20], &a().0);
        assert_eq!(&p[20..], &b().0);
    }

    #[test]
    fn method_payload_prefixes_method_id() {
        let m = MethodId([0xde, 0xad, 0xbe, 0xef]);
        let p = encode_req_payload(&TokenRequest::method_token(a(), b(), m)).unwrap();
        let mut expected = [a().0.to_vec(), b().0.to_vec()].concat();
        expected.extend_from_slice(&10u32.to_be_bytes());
        expected.extend_from_slice(b"0xdeadbeef");
        assert_eq!(p, expected);
    }

    #[test]
    fn shape_violations_are_rejected() {
        let m = MethodId([1, 2, 3, 4]);
        let mut r = TokenRequest::super_token(a(), b());
        r.method = Some(m);
        assert!(matches!(encode_req_payload(&r), Err(TokenError::ShapeMismatch(_))));
        let r = TokenRequest::argument_token(a(), b(), m, vec![]);
        assert!(matches!(encode_req_payload(&r), Err(TokenError::ShapeMismatch(_))));
        let mut r = TokenRequest::method_token(a(), b(), m);
        r.args.push(ArgPair::new("x", "1"));
        assert!(matches!(encode_req_payload(&r), Err(TokenError::ShapeMismatch(_))));
        let r = TokenRequest::argument_token(a(), b(), m, vec![ArgPair::new("", "1")]);
        assert!(matches!(encode_req_payload(&r), Err(TokenError::ShapeMismatch(_))));
    }

    // Every way of splitting a 3-character string into (name, value) with a
    // non-empty name. Plain concatenation maps all of them to the same bytes.
    #[test]
    fn argument_split_points_do_not_collide() {
        let m = MethodId([1, 2, 3, 4]);
        let text = "abc";
        let mut naive = HashSet::new();
        let mut prefixed = HashSet::new();
        let mut splits = 0;
        for cut in 1..=text.len() {
            let (name, value) = text.split_at(cut);
            splits += 1;
            naive.insert(format!("{name}{value}"));
            let req = TokenRequest::argument_token(a(), b(), m, vec![ArgPair::new(name, value)]);
            prefixed.insert(encode_req_payload(&req).unwrap());
        }
        assert_eq!(naive.len(), 1);
        assert_eq!(prefixed.len(), splits);
    }

    #[test]
    fn signing_payload_layout() {
        let p = signing_payload(TokenType::Super, 0, -1, &[]);
        let mut expected = vec![0x01, 0, 0, 0, 0];
        expected.extend_from_slice(&[0xff; 16]);
        assert_eq!(p, expected);
        assert_eq!(p, signing_payload(TokenType::Super, 0, -1, &[]));
    }

    #[test]
    fn signing_payload_distinguishes_one_byte_payloads() {
        let outputs: HashSet<_> = (0..=255u8)
            .map(|b| signing_payload(TokenType::Argument, 9, 3, &[b]))
            .collect();
        assert_eq!(outputs.len(), 256);
    }

    #[test]
    fn token_layout_offsets() {
        let t = Token { token_type: TokenType::Argument, expire: 0x01020304, index: -1, signature: Signature([9; 65]) };
        let bytes = t.encode();
        assert_eq!(bytes.len(), TOKEN_LEN);
        assert_eq!(bytes[0], 0x03);
        assert_eq!(&bytes[1..5], &[1, 2, 3, 4]);
        assert!(bytes[5..21].iter().all(|&b| b == 0xff));
        assert_eq!(&bytes[21..], &[9; 65][..]);
        assert_eq!(Token::decode(&bytes).unwrap(), t);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(Token::decode(&[0u8; 85]), Err(TokenError::BadLength(85)));
        let mut bytes = dummy_token(0).encode();
        bytes[0] = 4;
        assert_eq!(Token::decode(&bytes), Err(TokenError::BadType(4)));
        bytes[0] = 0;
        assert_eq!(Token::decode(&bytes), Err(TokenError::BadType(0)));
    }

    #[test]
    fn token_array_lookup() {
        let c = Address([0xcc; 20]);
        let entries = vec![(a(), dummy_token(1)), (b(), dummy_token(2)), (c, dummy_token(3))];
        let array = encode_token_array(&entries).unwrap();
        assert_eq!(array.len(), 2 + 3 * TOKEN_RECORD_LEN);
        assert_eq!(extract_token(&array, &c).unwrap().index, 3);
        let metered = extract_token_metered(&array, &c);
        assert_eq!(metered.bytes_scanned, 2 + 3 * ADDRESS_LEN + TOKEN_LEN);
    }

    #[test]
    fn token_array_errors() {
        let empty = encode_token_array(&[]).unwrap();
        assert_eq!(extract_token(&empty, &a()), Err(TokenError::NotFound(a())));
        let mut array = encode_token_array(&[(a(), dummy_token(1))]).unwrap();
        array.pop();
        assert!(matches!(extract_token(&array, &a()), Err(TokenError::Malformed(_))));
        assert!(matches!(
            encode_token_array(&[(a(), dummy_token(1)), (a(), dummy_token(2))]),
            Err(TokenError::DuplicateAddress(_))
        ));
    }

    #[test]
    fn calldata_round_trip_and_truncation() {
        let args = vec![ArgPair::new("amount", "5"), ArgPair::new("to", "")];
        let data = encode_args(&args);
        assert_eq!(decode_args(&data).unwrap(), args);
        assert!(decode_args(&data[..data.len() - 1]).is_err());
        assert!(decode_args(&[0, 0]).is_err());
    }

    #[test]
    fn issued_signature_binds_request() {
        let kp = KeyPair::from_seed(b"bind");
        let m = MethodId::from_signature("f(uint256)");
        let r1 = TokenRequest::argument_token(a(), b(), m, vec![ArgPair::new("x", "1")]);
        let r2 = TokenRequest::argument_token(a(), b(), m, vec![ArgPair::new("x", "2")]);
        let p1 = signing_payload(TokenType::Argument, 10, 0, &encode_req_payload(&r1).unwrap());
        let p2 = signing_payload(TokenType::Argument, 10, 0, &encode_req_payload(&r2).unwrap());
        let sig = crypto::sign(&kp, &p1);
        assert!(crypto::verify(&kp.public(), &p1, &sig));
        assert!(!crypto::verify(&kp.public(), &p2, &sig));
    }

    #[test]
    fn address_parsing() {
        let s = "0xAbCdEf0123456789abcdef0123456789ABCDEF01";
        let addr: Address = s.parse().unwrap();
        assert_eq!(addr.to_string(), s.to_lowercase());
        assert!("abcdef0123456789abcdef0123456789abcdef01".parse::<Address>().is_err());
        assert!("0x1234".parse::<Address>().is_err());
    }

    #[test]
    fn method_id_from_signature() {
        // transfer(address,uint256) is the well-known ERC-20 selector.
        assert_eq!(MethodId::from_signature("transfer(address,uint256)").to_string(), "0xa9059cbb");
    }

    #[test]
    fn request_json_shape() {
        let m = MethodId([1, 2, 3, 4]);
        let req = TokenRequest::argument_token(a(), b(), m, vec![ArgPair::new("x", "1")]);
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["type"], "argument");
        assert_eq!(v["methodId"], "0x01020304");
        assert_eq!(v["cAddr"], a().to_string());
        let back: TokenRequest = serde_json::from_value(v).unwrap();
        assert_eq!(back, req);
    }
}
