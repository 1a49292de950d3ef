"""Smoke test for the learned_lsm extension module.

Build and install first:  maturin build --release -m crates/py/Cargo.toml
then pip install the wheel, and run:  python python/smoke_test.py
"""

import tempfile

import learned_lsm


def check_store(path):
    keys = learned_lsm.dataset("seg10pct", 20_000, seed=1)
    assert keys == sorted(set(keys)) and len(keys) == 20_000

    with learned_lsm.Store(path, memtable_kb=64, max_file_kb=128, level_divisor=64, cba_mode="always", t_wait_ms=1) as s:
        for k in keys:
            s.put_int(k, k.to_bytes(8, "little"))
        s.delete_int(keys[5])
        s.compact()
        s.wait()
        learned = s.learn_all() + s.stats()["files_learned"]
        assert learned > 0, s.stats()

        assert s.get_int(keys[0]) == keys[0].to_bytes(8, "little")
        assert s.get_int(keys[5]) is None
        assert s.get_int(keys[-1] + 1) is None
        rows = s.scan_int(keys[3], 4)
        assert [k for k, _ in rows] == [keys[3], keys[4], keys[6], keys[7]]

        s.put(b"\x00" * 15 + b"\x2a", b"raw")
        assert s.get(b"\x00" * 15 + b"\x2a") == b"raw"

        st = s.stats()
        assert st["total_records"] >= len(keys)
        assert st["model_lookups"] > 0
        s.use_models = False
        assert s.get_int(keys[100]) == keys[100].to_bytes(8, "little")

    with learned_lsm.Store(path) as s:
        assert s.get_int(keys[-1]) == keys[-1].to_bytes(8, "little")

    try:
        learned_lsm.Store(path, key_size=8)
    except ValueError as e:
        assert "key" in str(e)
    else:
        raise AssertionError("reopening with another key size must fail")


def check_model():
    m = learned_lsm.PlrModel.fit(list(range(0, 3000, 3)), delta=4)
    assert len(m) == 1 and m.delta == 4 and m.num_points == 1000
    pos, lo, hi = m.predict(300)
    assert lo <= 100 <= hi and abs(pos - 100) <= 4
    assert m.predict(10**9) is None
    again = learned_lsm.PlrModel.from_bytes(m.to_bytes())
    assert again.segments == m.segments and again.key_range == (0, 2997)

    try:
        learned_lsm.PlrModel.fit([3, 1, 2])
    except ValueError:
        pass
    else:
        raise AssertionError("unsorted keys must be rejected")


def main():
    with tempfile.TemporaryDirectory() as d:
        check_store(d)
    check_model()
    print("smoke test passed")


if __name__ == "__main__":
    main()
