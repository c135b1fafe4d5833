use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use v2vsim::crypto::{Algorithm, Provider, StdProvider};
use v2vsim::identity::{ca_issue, verify_certificate, Brand, CertReject, Certificate, Color, StaticAttributes, Validity};
use v2vsim::puf::{enroll_crps, fractional_hamming, Challenge, CrpLedger, CrpVerdict, PufDevice, DEFAULT_RESPONSE_LATENCY};
use v2vsim::world::{angle_diff, autocollimator_check, normalize_heading, Alignment, Pose, SensorConfig, VehicleId, WorldState};

fn certificate(seed: u8) -> ([u8; 32], Certificate) {
    let p = StdProvider;
    let ca = p.gen_keypair(Algorithm::Ed25519, &[seed; 32]);
    let subject = p.gen_keypair(Algorithm::Ed25519, &[seed ^ 0xff; 32]);
    let attrs = StaticAttributes::new("1HGCM82633A004352", "KC-1001", Brand::Skoda, Color::Green).unwrap();
    let puf = PufDevice::manufacture([seed; 32], DEFAULT_RESPONSE_LATENCY);
    let crps = enroll_crps(&p, &puf, 2, 1);
    let cert = ca_issue(&p, &ca.secret, attrs, subject.public, crps, Validity { valid_from: 0.0, valid_to: 100.0 }).unwrap();
    (ca.public, cert)
}

/// Independent wrap oracle: the difference as an angle on the unit circle.
fn circle_diff(a: f64, b: f64) -> f64 {
    (a - b).sin().atan2((a - b).cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dh_agrees_for_any_seeds(a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
        let p = StdProvider;
        let ka = p.gen_keypair(Algorithm::X25519, &a);
        let kb = p.gen_keypair(Algorithm::X25519, &b);
        prop_assert_eq!(p.dh_shared(&ka.secret, &kb.public).unwrap(), p.dh_shared(&kb.secret, &ka.public).unwrap());
    }

    #[test]
    fn any_flip_in_signed_bytes_breaks_the_certificate(bit in 0usize..4096) {
        let (ca_pub, cert) = certificate(3);
        let bytes = cert.to_bytes();
        let bit = bit % (bytes.len() * 8);
        let mut mutated = bytes.clone();
        mutated[bit / 8] ^= 1 << (bit % 8);
        if let Ok(c) = Certificate::from_bytes(&mutated) {
            prop_assert!(verify_certificate(&StdProvider, &ca_pub, &c, 1.0).is_err());
        }
    }

    #[test]
    fn angle_difference_matches_circle_oracle(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let d = angle_diff(a, b);
        prop_assert!(d > -std::f64::consts::PI - 1e-12 && d <= std::f64::consts::PI + 1e-12);
        let oracle = circle_diff(a, b);
        // Both ends of the branch cut describe the same angle.
        let same = (d - oracle).abs() < 1e-9 || ((d - oracle).abs() - std::f64::consts::TAU).abs() < 1e-9;
        prop_assert!(same, "{} vs {}", d, oracle);
    }

    #[test]
    fn heading_stays_in_range(a in -1e4f64..1e4) {
        let h = normalize_heading(a);
        prop_assert!((0.0..std::f64::consts::TAU).contains(&h));
        prop_assert!(circle_diff(h, a).abs() < 1e-9);
    }
}

#[test]
fn certificate_from_wrong_ca_or_expired() {
    let (ca_pub, cert) = certificate(3);
    let (other_ca, _) = certificate(4);
    assert_eq!(verify_certificate(&StdProvider, &ca_pub, &cert, 1.0), Ok(()));
    assert_eq!(verify_certificate(&StdProvider, &other_ca, &cert, 1.0), Err(CertReject::BadSignature));
    assert_eq!(verify_certificate(&StdProvider, &ca_pub, &cert, 101.0), Err(CertReject::Expired));
}

#[test]
fn wrap_around_bearings_align() {
    let cfg = SensorConfig::default();
    let tau = std::f64::consts::TAU;
    assert_eq!(autocollimator_check(&cfg, 0.001, tau - 0.001), Alignment::Aligned);
    assert!(matches!(autocollimator_check(&cfg, 0.0, 2.0 * cfg.theta_tol), Alignment::Misaligned(_)));
}

#[test]
fn puf_intra_device_stable_inter_device_half() {
    let p = StdProvider;
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let mut inter = Vec::new();
    for _ in 0..1000 {
        let a = PufDevice::manufacture(rng.gen(), DEFAULT_RESPONSE_LATENCY);
        let b = PufDevice::manufacture(rng.gen(), DEFAULT_RESPONSE_LATENCY);
        let ch = Challenge { challenge_id: 0, challenge_bits: rng.gen() };
        assert_eq!(fractional_hamming(&a.respond(&p, &ch), &a.respond(&p, &ch)), 0.0);
        inter.push(fractional_hamming(&a.respond(&p, &ch), &b.respond(&p, &ch)));
    }
    let mean = inter.iter().sum::<f64>() / inter.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
    // 256 fair coin flips: sd of the fraction is 1/32.
    let sd = (inter.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (inter.len() - 1) as f64).sqrt();
    assert!((sd - 1.0 / 32.0).abs() < 0.005, "sd {sd}");
}

#[test]
fn crp_is_single_use_across_devices() {
    let p = StdProvider;
    let genuine = PufDevice::manufacture([1; 32], DEFAULT_RESPONSE_LATENCY);
    let other = PufDevice::manufacture([2; 32], DEFAULT_RESPONSE_LATENCY);
    let crps = enroll_crps(&p, &genuine, 3, 5);
    let mut ledger = CrpLedger::new();
    let ch = |i: usize| crps[i].challenge;
    assert_ne!(ledger.verify_response(&p, &crps[0], &other.respond(&p, &ch(0))), CrpVerdict::Genuine);
    assert_eq!(ledger.verify_response(&p, &crps[1], &genuine.respond(&p, &ch(1))), CrpVerdict::Genuine);
    assert_ne!(ledger.verify_response(&p, &crps[1], &genuine.respond(&p, &ch(1))), CrpVerdict::Genuine);
}

#[test]
fn lidar_noise_matches_configuration() {
    let cfg = SensorConfig { sigma_range: 0.25, sigma_bearing: 0.02, ..SensorConfig::default() };
    let mut world = WorldState::new();
    let (a, b) = (VehicleId("a".into()), VehicleId("b".into()));
    let target = Pose::new(-40.0, 12.0, 1.0, 0.0);
    world.poses.insert(a.clone(), Pose::new(0.0, 0.0, 2.5, 0.0));
    world.poses.insert(b, target);
    let truth_range = world.poses[&a].distance(&target);
    let truth_bearing = world.poses[&a].relative_bearing(&target);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let n = 10_000;
    let (mut r, mut br) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let m = world.lidar_measure(&cfg, &a, &target, &mut rng).unwrap();
        r.push(m.range - truth_range);
        br.push(angle_diff(m.bearing, truth_bearing));
    }
    let sd = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 4.0 * (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt() / (v.len() as f64).sqrt());
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    assert!((sd(&r) / cfg.sigma_range - 1.0).abs() < 0.05);
    assert!((sd(&br) / cfg.sigma_bearing - 1.0).abs() < 0.05);
}

#[test]
fn noiseless_sensors_report_ground_truth() {
    let cfg = SensorConfig { sigma_range: 0.0, sigma_bearing: 0.0, ..SensorConfig::default() };
    let mut world = WorldState::new();
    let a = VehicleId("a".into());
    world.poses.insert(a.clone(), Pose::at(0.0, 0.0));
    world.poses.insert(VehicleId("b".into()), Pose::at(3.0, 4.0));
    let m = world.lidar_measure(&cfg, &a, &Pose::at(3.0, 4.0), &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
    assert_eq!(m.range, 5.0);
    assert_eq!(m.bearing, 4.0f64.atan2(3.0));
}
