//! Vehicle identities, sense-able static attributes and the certificate
//! authority that signs a public key together with those attributes as a
//! single blob.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{hex, Provider, Signature, KEY_LEN, SIGNATURE_LEN};
use crate::puf::CrpRecord;
use crate::wire::{DecodeError, Reader, Writer};
use crate::world::Pose;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error("malformed VIN {0:?}")]
    MalformedVin(String),
    #[error("empty license plate")]
    EmptyPlate,
    #[error("empty validity window [{0}, {1}]")]
    EmptyValidity(f64, f64),
    #[error("unknown {kind} {value:?}")]
    UnknownRegistryValue { kind: &'static str, value: String },
}

macro_rules! registry {
    ($name:ident, $kind:literal, [$($variant:ident => $text:literal),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            fn code(&self) -> u8 {
                Self::ALL.iter().position(|v| v == self).unwrap() as u8
            }

            fn from_code(c: u8) -> Option<Self> {
                Self::ALL.get(c as usize).copied()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = IdentityError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| IdentityError::UnknownRegistryValue { kind: $kind, value: s.to_owned() })
            }
        }
    };
}

registry!(Brand, "brand", [
    Toyota => "toyota",
    Volkswagen => "volkswagen",
    Ford => "ford",
    Honda => "honda",
    Hyundai => "hyundai",
    Bmw => "bmw",
    Mercedes => "mercedes",
    Renault => "renault",
    Skoda => "skoda",
    Kia => "kia",
]);

registry!(Color, "color", [
    White => "white",
    Black => "black",
    Silver => "silver",
    Gray => "gray",
    Red => "red",
    Blue => "blue",
    Green => "green",
    Yellow => "yellow",
]);

pub fn is_valid_vin(vin: &str) -> bool {
    vin.len() == 17
        && vin
            .bytes()
            .all(|c| c.is_ascii_digit() || (c.is_ascii_uppercase() && !matches!(c, b'I' | b'O' | b'Q')))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StaticAttributes {
    vin: String,
    pub license_plate: String,
    pub brand: Brand,
    pub color: Color,
}

impl StaticAttributes {
    pub fn new(vin: &str, license_plate: &str, brand: Brand, color: Color) -> Result<Self, IdentityError> {
        if !is_valid_vin(vin) {
            return Err(IdentityError::MalformedVin(vin.to_owned()));
        }
        if license_plate.trim().is_empty() {
            return Err(IdentityError::EmptyPlate);
        }
        Ok(Self { vin: vin.to_owned(), license_plate: license_plate.to_owned(), brand, color })
    }

    pub fn vin(&self) -> &str {
        &self.vin
    }

    fn encode(&self, w: &mut Writer) {
        w.str(&self.vin).str(&self.license_plate).u8(self.brand.code()).u8(self.color.code());
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let at = r.position();
        let vin = r.string()?;
        let license_plate = r.string()?;
        let brand = Brand::from_code(r.u8()?).ok_or(DecodeError::Invalid { what: "brand", offset: at })?;
        let color = Color::from_code(r.u8()?).ok_or(DecodeError::Invalid { what: "color", offset: at })?;
        // Decoding does not re-validate: a tampered certificate must still
        // parse so that verification can reject it.
        Ok(Self { vin, license_plate, brand, color })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validity {
    pub valid_from: f64,
    pub valid_to: f64,
}

#[derive(Clone, PartialEq)]
pub struct Certificate {
    pub subject_attributes: StaticAttributes,
    pub subject_public_key: [u8; KEY_LEN],
    pub puf_crp_commitments: Vec<CrpRecord>,
    pub valid_from: f64,
    pub valid_to: f64,
    pub ca_signature: Signature,
}

impl fmt::Debug for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Certificate")
            .field("vin", &self.subject_attributes.vin)
            .field("key", &hex(&self.subject_public_key[..6]))
            .finish_non_exhaustive()
    }
}

impl Certificate {
    /// The byte string covered by the CA signature: every field before it,
    /// in declaration order.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str("v2v-cert-v1");
        self.subject_attributes.encode(&mut w);
        w.bytes(&self.subject_public_key);
        w.u32(self.puf_crp_commitments.len() as u32);
        for c in &self.puf_crp_commitments {
            c.encode(&mut w);
        }
        w.f64(self.valid_from).f64(self.valid_to);
        w.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.signed_bytes()).bytes(&self.ca_signature.0);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut outer = Reader::new(buf);
        let tbs = outer.bytes()?;
        let ca_signature = Signature(outer.array::<SIGNATURE_LEN>()?);
        outer.finish()?;

        let mut r = Reader::new(tbs);
        if r.string()? != "v2v-cert-v1" {
            return Err(DecodeError::Invalid { what: "certificate version", offset: 0 });
        }
        let subject_attributes = StaticAttributes::decode(&mut r)?;
        let subject_public_key = r.array()?;
        let n = r.u32()?;
        let mut puf_crp_commitments = Vec::new();
        for _ in 0..n {
            puf_crp_commitments.push(CrpRecord::decode(&mut r)?);
        }
        let valid_from = r.f64()?;
        let valid_to = r.f64()?;
        r.finish()?;
        Ok(Self { subject_attributes, subject_public_key, puf_crp_commitments, valid_from, valid_to, ca_signature })
    }

    /// Human-readable single-line dump used in traces.
    pub fn dump(&self) -> String {
        let a = &self.subject_attributes;
        format!(
            "vin={} plate={} brand={} color={} key={} crps={} valid=[{:.3},{:.3}]",
            a.vin,
            a.license_plate,
            a.brand,
            a.color,
            hex(&self.subject_public_key[..8]),
            self.puf_crp_commitments.len(),
            self.valid_from,
            self.valid_to
        )
    }
}

pub fn ca_issue(
    provider: &dyn Provider,
    ca_secret: &[u8; KEY_LEN],
    attrs: StaticAttributes,
    subject_public_key: [u8; KEY_LEN],
    crp_commitments: Vec<CrpRecord>,
    validity: Validity,
) -> Result<Certificate, IdentityError> {
    if !is_valid_vin(&attrs.vin) {
        return Err(IdentityError::MalformedVin(attrs.vin));
    }
    if !(validity.valid_from <= validity.valid_to) {
        return Err(IdentityError::EmptyValidity(validity.valid_from, validity.valid_to));
    }
    let mut cert = Certificate {
        subject_attributes: attrs,
        subject_public_key,
        puf_crp_commitments: crp_commitments,
        valid_from: validity.valid_from,
        valid_to: validity.valid_to,
        ca_signature: Signature([0; SIGNATURE_LEN]),
    };
    cert.ca_signature = provider
        .sign(ca_secret, &cert.signed_bytes())
        .expect("signed bytes are never empty");
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CertReject {
    BadSignature,
    Expired,
    NotYetValid,
}

impl CertReject {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertReject::BadSignature => "BAD_SIGNATURE",
            CertReject::Expired => "EXPIRED",
            CertReject::NotYetValid => "NOT_YET_VALID",
        }
    }
}

pub fn verify_certificate(
    provider: &dyn Provider,
    ca_public: &[u8; KEY_LEN],
    cert: &Certificate,
    now: f64,
) -> Result<(), CertReject> {
    if !provider.verify(ca_public, &cert.signed_bytes(), &cert.ca_signature.0) {
        return Err(CertReject::BadSignature);
    }
    if now < cert.valid_from {
        return Err(CertReject::NotYetValid);
    }
    if now > cert.valid_to {
        return Err(CertReject::Expired);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeObservation {
    pub observed_plate: Option<String>,
    pub observed_brand: Option<Brand>,
    pub observed_color: Option<Color>,
    pub observer_pose: Pose,
    pub observed_at: f64,
}

impl AttributeObservation {
    pub fn is_blank(&self) -> bool {
        self.observed_plate.is_none() && self.observed_brand.is_none() && self.observed_color.is_none()
    }
}

pub fn match_attributes(obs: &AttributeObservation, attrs: &StaticAttributes) -> bool {
    if obs.is_blank() {
        return false;
    }
    obs.observed_plate.as_ref().map_or(true, |p| *p == attrs.license_plate)
        && obs.observed_brand.map_or(true, |b| b == attrs.brand)
        && obs.observed_color.map_or(true, |c| c == attrs.color)
}
