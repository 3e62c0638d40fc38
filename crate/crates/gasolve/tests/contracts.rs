use gasolve::checkpoint::Checkpoint;
use gasolve::config::{is_known, Config, SCALAR_KEYS};
use gasolve::CliError;
use gasolve_core::disc::{weight_count, Discriminator};
use gasolve_core::gs::{param_count, GsParams};
use gasolve_core::optim::AdamState;
use gasolve_core::train::{DiscState, Mode};
use proptest::prelude::*;

fn typo() -> impl Strategy<Value = String> {
    (0..SCALAR_KEYS.len(), any::<prop::sample::Index>(), 0u8..3, prop::char::range('.', 'z')).prop_map(|(k, at, op, c)| {
        let mut key: Vec<char> = SCALAR_KEYS[k].chars().collect();
        let i = at.index(key.len());
        match op {
            0 => key.insert(i, c),
            1 => {
                key.remove(i);
            }
            _ => key[i] = c,
        }
        key.into_iter().collect()
    })
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn checkpoint() -> impl Strategy<Value = Checkpoint> {
    (1usize..7, 1usize..3, any::<bool>(), 0usize..5000).prop_flat_map(|(n, d, gas, iteration)| {
        let p = param_count(n);
        let w = weight_count(d);
        (
            prop::collection::vec(finite(), p),
            prop::collection::vec(finite(), p),
            prop::collection::vec(finite(), 2 * p),
            prop::collection::vec(finite(), if gas { 3 * w } else { 0 }),
        )
            .prop_map(move |(params, ema, adam, disc)| {
                let disc = gas.then(|| DiscState {
                    disc: Discriminator::from_weights(d, disc[..w].to_vec()).unwrap(),
                    adam: AdamState {
                        m: disc[w..2 * w].to_vec(),
                        v: disc[2 * w..].to_vec(),
                        t: iteration as u64,
                    },
                });
                Checkpoint {
                    dim: d,
                    mode: if gas { Mode::Gas } else { Mode::Gs },
                    iteration,
                    params: GsParams::from_flat(n, &params).unwrap(),
                    ema: GsParams::from_flat(n, &ema).unwrap(),
                    adam: AdamState {
                        m: adam[..p].to_vec(),
                        v: adam[p..].to_vec(),
                        t: iteration as u64,
                    },
                    disc,
                    config: vec![("seed".into(), iteration.to_string())],
                }
            })
    })
}

proptest! {
    #[test]
    fn key_typos_are_rejected_by_name(key in typo()) {
        prop_assume!(!is_known(&key) && !key.contains('=') && !key.starts_with('#') && !key.trim().is_empty());
        let text = format!("problem.d = 2\n{key} = 1\n");
        match Config::parse(&text) {
            Err(CliError::UnknownKey(k)) => prop_assert_eq!(k, key.trim()),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_round_trip_is_lossless(c in checkpoint()) {
        let text = c.to_text();
        let back = Checkpoint::parse(&text).unwrap();
        for (a, b) in c.params.flatten().iter().zip(back.params.flatten()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back, c);
    }
}

#[test]
fn every_scalar_key_is_accepted() {
    for k in SCALAR_KEYS {
        assert!(Config::parse(&format!("{k} = x")).is_ok(), "{k}");
    }
    assert!(is_known("mixture.12.mean"));
}
