from envguard.services.worker_pool import WorkerPool

# builtins and bound dict methods pickle, so they run in worker processes too
HITS = {3: "c", 4: "d"}


def test_inline_pool_keeps_order():
    pool = WorkerPool(1)
    assert pool.map_ordered(abs, [-3, 1, -2]) == [3, 1, 2]
    assert pool.first_hit(HITS.get, [1, 2, 3, 4]) == "c"
    assert pool.first_hit(HITS.get, [1, 2]) is None


def test_process_pool_matches_inline():
    with WorkerPool(2) as pool:
        assert pool.map_ordered(abs, [-3, 1, -2, 5]) == [3, 1, 2, 5]
        # submission order wins, not completion order
        assert pool.first_hit(HITS.get, [4, 3, 1]) == "d"
        assert pool.first_hit(HITS.get, [1, 2]) is None


def test_worker_count_is_at_least_one():
    assert WorkerPool(0).workers == 1
    assert WorkerPool(-2).workers == 1
