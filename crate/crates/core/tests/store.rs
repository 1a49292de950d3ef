use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;

use learned_lsm::clock::VirtualClock;
use learned_lsm::plr::KeyInt;
use learned_lsm::{CbaMode, Engine, LearningMode, Options, TWait};

fn small(background: bool) -> Options {
    Options {
        memtable_bytes: 32 * 256,
        max_file_bytes: 32 * 512,
        level_size_divisor: 1024,
        background,
        clock: (!background).then(|| Arc::new(VirtualClock::new()) as _),
        t_wait: TWait::Fixed(Duration::from_millis(1)),
        cba_mode: CbaMode::Always,
        train_ns_per_point: Some(10.0),
        ..Options::default()
    }
}

fn val(k: KeyInt, gen: u64) -> Vec<u8> {
    let mut v = (k as u64).to_le_bytes().to_vec();
    v.extend_from_slice(&gen.to_le_bytes());
    v
}

#[test]
fn readers_see_monotone_versions_while_writing() {
    let d = tempfile::tempdir().unwrap();
    let e = Arc::new(Engine::open(d.path(), small(true)).unwrap());
    let n: KeyInt = 4000;
    for k in 0..n {
        e.put_int(k, &val(k, 0)).unwrap();
    }
    let stop = Arc::new(AtomicBool::new(false));
    let readers: Vec<_> = (0..3)
        .map(|r| {
            let (e, stop) = (e.clone(), stop.clone());
            thread::spawn(move || {
                let mut seen = vec![0u64; n as usize];
                let mut i = r as u64;
                while !stop.load(Ordering::Relaxed) {
                    let k = (i * 7919 % n as u64) as KeyInt;
                    let v = e.get_int(k).unwrap().expect("key never deleted");
                    assert_eq!(&v[..8], &(k as u64).to_le_bytes());
                    let gen = u64::from_le_bytes(v[8..16].try_into().unwrap());
                    assert!(
                        gen >= seen[k as usize],
                        "key {k} went back from {} to {gen}",
                        seen[k as usize]
                    );
                    seen[k as usize] = gen;
                    i += 1;
                }
            })
        })
        .collect();
    for gen in 1..=5u64 {
        for k in 0..n {
            e.put_int(k, &val(k, gen)).unwrap();
        }
    }
    stop.store(true, Ordering::Relaxed);
    for r in readers {
        r.join().unwrap();
    }
    e.wait_for_quiescence(true).unwrap();
    for k in 0..n {
        assert_eq!(e.get_int(k).unwrap().unwrap(), val(k, 5));
    }
    assert!(e.stats().files_learned > 0);
}

#[test]
fn reopen_keeps_data_and_models() {
    let d = tempfile::tempdir().unwrap();
    let learned;
    {
        let e = Engine::open(d.path(), small(false)).unwrap();
        for k in 0..3000 {
            e.put_int(k * 2, &val(k * 2, 1)).unwrap();
        }
        e.compact_until_settled().unwrap();
        e.learn_all_now().unwrap();
        learned = e.stats().learned_files;
        assert_eq!(learned, e.stats().total_files());
        e.close().unwrap();
    }
    let e = Engine::open(d.path(), small(false)).unwrap();
    assert_eq!(e.stats().learned_files, learned);
    for k in (0..3000).step_by(97) {
        assert_eq!(e.get_int(k * 2).unwrap().unwrap(), val(k * 2, 1));
        assert_eq!(e.get_int(k * 2 + 1).unwrap(), None);
    }
    let s = e.stats();
    assert!(s.model_lookups > 0 && s.baseline_lookups == 0, "{s:?}");

    // another delta invalidates the stored models
    drop(e);
    let e = Engine::open(
        d.path(),
        Options {
            delta: 4,
            ..small(false)
        },
    )
    .unwrap();
    assert_eq!(e.stats().learned_files, 0);
}

#[derive(Debug, Clone)]
enum Step {
    Put(u16, u8),
    Delete(u16),
    Get(u16),
    Scan(u16, u8),
    Flush,
    Compact,
    Learn,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        6 => (any::<u16>(), any::<u8>()).prop_map(|(k, v)| Step::Put(k % 2000, v)),
        2 => any::<u16>().prop_map(|k| Step::Delete(k % 2000)),
        4 => any::<u16>().prop_map(|k| Step::Get(k % 2000)),
        1 => (any::<u16>(), any::<u8>()).prop_map(|(k, l)| Step::Scan(k % 2000, l % 50)),
        1 => Just(Step::Flush),
        1 => Just(Step::Compact),
        1 => Just(Step::Learn),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matches_a_sorted_map(steps in prop::collection::vec(step(), 1..1500), level in any::<bool>()) {
        let d = tempfile::tempdir().unwrap();
        let mut opts = small(false);
        if level {
            opts.learning_mode = LearningMode::Level;
        }
        let e = Engine::open(d.path(), opts).unwrap();
        let mut oracle: BTreeMap<KeyInt, Vec<u8>> = BTreeMap::new();
        for s in steps {
            match s {
                Step::Put(k, v) => {
                    e.put_int(k as KeyInt, &[v; 3]).unwrap();
                    oracle.insert(k as KeyInt, vec![v; 3]);
                }
                Step::Delete(k) => {
                    e.delete_int(k as KeyInt).unwrap();
                    oracle.remove(&(k as KeyInt));
                }
                Step::Get(k) => {
                    prop_assert_eq!(e.get_int(k as KeyInt).unwrap(), oracle.get(&(k as KeyInt)).cloned());
                }
                Step::Scan(k, l) => {
                    let want: Vec<_> = oracle.range(k as KeyInt..).take(l as usize).map(|(k, v)| (*k, v.clone())).collect();
                    prop_assert_eq!(e.scan_int(k as KeyInt, l as usize).unwrap(), want);
                }
                Step::Flush => e.flush().unwrap(),
                Step::Compact => e.compact_until_settled().unwrap(),
                Step::Learn => {
                    e.learn_all_now().unwrap();
                }
            }
        }
        let all = e.scan_int(0, usize::MAX).unwrap();
        prop_assert_eq!(all, oracle.into_iter().collect::<Vec<_>>());
    }
}
