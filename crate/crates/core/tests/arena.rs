mod common;

use std::collections::HashMap;
use std::sync::Arc;

use cmpi::arena::{Arena, HashGeometry, ObjHandle};
use cmpi::device::CoherenceMode;
use cmpi::Error;
use common::{device, spawn_worker, wait_all, worker_role};
use proptest::prelude::*;

fn fresh(mode: CoherenceMode, primes: Vec<u64>) -> (tempfile::TempDir, Arena) {
    let dir = tempfile::tempdir().unwrap();
    let dev = Arc::new(device(&dir.path().join("d"), 4 << 20, mode));
    let arena = Arena::format(dev, HashGeometry::new(primes).unwrap()).unwrap();
    (dir, arena)
}

#[derive(Debug, Clone)]
enum Op {
    Create(u8, u64),
    Open(u8),
    Unlink(u8),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..24, 1u64..5000).prop_map(|(n, s)| Op::Create(n, s)),
        (0u8..24).prop_map(Op::Open),
        (0u8..24).prop_map(Op::Unlink),
    ]
}

fn overlaps(a: &ObjHandle, b: &ObjHandle) -> bool {
    a.offset < b.offset + b.size && b.offset < a.offset + a.size
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // The arena agrees with a map from name to handle, and live objects
    // never overlap.
    #[test]
    fn behaves_like_a_map(ops in prop::collection::vec(op(), 1..120), incoherent in any::<bool>()) {
        let mode = if incoherent { CoherenceMode::IncoherentEmulated } else { CoherenceMode::Coherent };
        let (_dir, arena) = fresh(mode, vec![13, 11, 7]);
        let mut model: HashMap<String, ObjHandle> = HashMap::new();
        for op in ops {
            match op {
                Op::Create(n, size) => {
                    let name = format!("obj{n}");
                    match arena.create(&name, size) {
                        Ok(h) => {
                            prop_assert!(!model.contains_key(&name));
                            prop_assert!(h.size >= size && h.size % 64 == 0);
                            for other in model.values() {
                                prop_assert!(!overlaps(&h, other));
                            }
                            model.insert(name, h);
                        }
                        Err(Error::NameExists(_)) => prop_assert!(model.contains_key(&name)),
                        Err(Error::MetadataFull(_)) => prop_assert!(model.len() >= 3),
                        Err(e) => prop_assert!(false, "{e}"),
                    }
                }
                Op::Open(n) => {
                    let name = format!("obj{n}");
                    match (arena.open(&name), model.get(&name)) {
                        (Ok(h), Some(m)) => prop_assert_eq!(h, *m),
                        (Err(Error::NotFound(_)), None) => {}
                        (got, want) => prop_assert!(false, "{got:?} vs {want:?}"),
                    }
                }
                Op::Unlink(n) => {
                    let name = format!("obj{n}");
                    let r = arena.unlink(&name);
                    prop_assert_eq!(r.is_ok(), model.remove(&name).is_some());
                }
            }
        }
        let mut listed: Vec<String> = arena.list().unwrap().into_iter().map(|o| o.name).collect();
        let mut expect: Vec<String> = model.keys().cloned().collect();
        listed.sort();
        expect.sort();
        prop_assert_eq!(listed, expect);
    }
}

#[test]
fn racing_creators_yield_one_winner() {
    if let Some(role) = worker_role() {
        let rank: usize = role.parse().unwrap();
        let path = std::env::var("DEV_PATH").unwrap();
        let dev = Arc::new(device(path.as_ref(), 4 << 20, CoherenceMode::IncoherentEmulated));
        let arena = Arena::attach(dev).unwrap().with_rank(rank);
        let mut won = 0;
        for i in 0..200 {
            match arena.create(&format!("contested{i}"), 100) {
                Ok(_) => won += 1,
                Err(Error::NameExists(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
        println!("won {won}");
        return;
    }
    let (dir, arena) = fresh(CoherenceMode::IncoherentEmulated, vec![1021, 1019, 1013, 1009]);
    let path = dir.path().join("d");
    let kids = (0..3)
        .map(|r| {
            spawn_worker(
                "racing_creators_yield_one_winner",
                &r.to_string(),
                &[("DEV_PATH", path.display().to_string())],
            )
        })
        .collect();
    let wins: usize = wait_all(kids)
        .iter()
        .map(|out| {
            let at = out.find("won ").unwrap() + 4;
            out[at..].split_whitespace().next().unwrap().parse::<usize>().unwrap()
        })
        .sum();
    assert_eq!(wins, 200);
    let objs = arena.list().unwrap();
    assert_eq!(objs.len(), 200);
    let mut handles: Vec<_> = objs.iter().map(|o| o.handle).collect();
    handles.sort_by_key(|h| h.offset);
    assert!(handles.windows(2).all(|w| w[0].offset + w[0].size <= w[1].offset));
}
