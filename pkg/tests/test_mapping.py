import numpy as np
import pytest

from phonmap.errors import IntegrityError, InvalidArgumentError
from phonmap.inventory import SymbolInventory
from phonmap.mapping import (
    EmbeddingMatrix,
    MappingTable,
    discover_mapping,
    parse_pair_table,
    probe,
    separate_init,
    threshold_table,
    transfer_embeddings,
    unified_transfer,
)
from phonmap.models import Ptn, PtnArch, ptn_forward


def inv(prefix, n):
    return SymbolInventory(tuple(f"{prefix}{k}" for k in range(n)))


def scripted_ptn(logits):
    """PTN whose probe of source i returns softmax(logits[i]) exactly.

    One-hot input -> identity hidden layers -> row i of the output weights.
    """
    logits = np.asarray(logits, dtype=float)
    n_src, n_out = logits.shape
    n_in = n_src + 1
    W3 = np.zeros((n_in, n_out))
    W3[:n_src] = logits
    params = {
        "fc1.weight": np.eye(n_in), "fc1.bias": np.zeros(n_in),
        "fc2.weight": np.eye(n_in), "fc2.bias": np.zeros(n_in),
        "fc3.weight": W3, "fc3.bias": np.zeros(n_out),
    }
    return Ptn(PtnArch(n_in, n_out, hidden=n_in), params)


@pytest.fixture
def src():
    return inv("s", 6)


@pytest.fixture
def tgt():
    return inv("t", 4)


def table(entries, src, tgt):
    return MappingTable(entries, src.digest, tgt.digest)


class TestProbe:
    def test_is_distribution_and_deterministic(self):
        ptn = Ptn(PtnArch(7, 5, hidden=16), rng=np.random.default_rng(0))
        a, b = probe(ptn, 3), probe(ptn, 3)
        assert abs(a.sum() - 1) < 1e-9
        np.testing.assert_array_equal(a, b)

    def test_matches_forward_on_one_hot(self):
        logits = np.random.default_rng(1).normal(size=(3, 4))
        p = probe(scripted_ptn(logits), 2)
        e = np.exp(logits[2] - logits[2].max())
        np.testing.assert_allclose(p, e / e.sum(), rtol=1e-12)

    @pytest.mark.parametrize("i", [-1, 6, 7])
    def test_out_of_range_or_blank(self, i):
        with pytest.raises(InvalidArgumentError):
            probe(Ptn(PtnArch(7, 5, hidden=4)), i)

    def test_smoothing_mixes_with_uniform(self):
        ptn = Ptn(PtnArch(4, 3, hidden=8), rng=np.random.default_rng(2))
        o = np.full((1, 4), 0.2 / 4)
        o[0, 1] += 0.8
        np.testing.assert_array_equal(probe(ptn, 1, smoothing=0.2), ptn_forward(ptn, o)[0])


class TestDiscoverMapping:
    def test_below_threshold_is_none(self):
        # target probabilities 0.35, 0.30, 0.20 and blank 0.15
        ptn = scripted_ptn(np.log([[0.35, 0.30, 0.20, 0.15]]))
        t = discover_mapping(ptn, inv("s", 1), inv("t", 3), xi=0.4)
        assert t.entries == [None]

    def test_one_hot_maps_with_confidence_one(self):
        ptn = scripted_ptn([[0.0, 0.0, 800.0, 0.0]])
        for xi in (0.0, 0.4, 0.99):
            t = discover_mapping(ptn, inv("s", 1), inv("t", 3), xi=xi)
            assert t.entries == [(2, 1.0)]

    def test_blank_never_chosen(self):
        # blank dominates but the best linguistic target still clears xi=0
        ptn = scripted_ptn([[0.0, 1.0, 0.5, 9.0]])
        j, conf = discover_mapping(ptn, inv("s", 1), inv("t", 3), xi=0.0).entries[0]
        assert j == 1 and conf < 0.01

    def test_tie_goes_to_lowest_index(self):
        ptn = scripted_ptn([[0.0, 3.0, 3.0, 0.0]])
        assert discover_mapping(ptn, inv("s", 1), inv("t", 3), xi=0.0).entries[0][0] == 1

    def test_xi_zero_maps_everything(self, src, tgt):
        ptn = Ptn(PtnArch(7, 5, hidden=32), rng=np.random.default_rng(3))
        assert all(e is not None for e in discover_mapping(ptn, src, tgt, xi=0.0).entries)

    def test_confidence_always_above_xi(self, src, tgt):
        ptn = scripted_ptn(np.random.default_rng(4).normal(0, 2, size=(6, 5)))
        for xi in (0.0, 0.2, 0.4, 0.6):
            for e in discover_mapping(ptn, src, tgt, xi).entries:
                assert e is None or (e[1] > xi and e[0] < len(tgt))

    def test_raising_xi_only_removes(self, src, tgt):
        ptn = scripted_ptn(np.random.default_rng(5).normal(0, 2, size=(6, 5)))
        prev = discover_mapping(ptn, src, tgt, 0.0).pairs()
        for xi in (0.1, 0.3, 0.5, 0.7, 0.9):
            cur = discover_mapping(ptn, src, tgt, xi).pairs()
            assert cur.items() <= prev.items()
            assert cur == threshold_table(discover_mapping(ptn, src, tgt, 0.0), xi).pairs()
            prev = cur

    def test_width_mismatch(self, src, tgt):
        with pytest.raises(InvalidArgumentError):
            discover_mapping(Ptn(PtnArch(7, 6, hidden=4)), src, tgt, 0.4)

    @pytest.mark.parametrize("xi", [-0.1, 1.0])
    def test_xi_range(self, src, tgt, xi):
        with pytest.raises(InvalidArgumentError):
            discover_mapping(Ptn(PtnArch(7, 5, hidden=4)), src, tgt, xi)


class TestTableText:
    def test_round_trip(self, src, tgt):
        t = table([(1, 0.8), None, (3, 0.4123456789012345), None, None, (1, 1.0)], src, tgt)
        back = MappingTable.from_text(t.to_text(src, tgt), src, tgt)
        assert back.entries == t.entries

    def test_format(self, src, tgt):
        text = table([(2, 0.5)] + [None] * 5, src, tgt).to_text(src, tgt)
        body = [ln for ln in text.splitlines() if not ln.startswith("#")]
        assert body[0] == "s0\tt2\t0.5"
        assert body[1] == "s1\tNONE"

    def test_digest_mismatch(self, src, tgt):
        text = table([None] * 6, src, tgt).to_text(src, tgt)
        with pytest.raises(IntegrityError):
            MappingTable.from_text(text, src, inv("u", 4))

    def test_unknown_symbol_line_number(self, src, tgt):
        with pytest.raises(InvalidArgumentError, match="line 2.*'zz'"):
            MappingTable.from_text("s0\tNONE\nzz\tt1\t0.9\n", src, tgt)


class TestTransferEmbeddings:
    @pytest.fixture
    def W_src(self, src):
        return EmbeddingMatrix(np.random.default_rng(6).normal(size=(6, 3)), src)

    def test_conflict_takes_highest_confidence(self, W_src, src, tgt):
        entries = [None] * 6
        entries[2], entries[5] = (3, 0.8), (3, 0.6)
        W, report = transfer_embeddings(W_src, table(entries, src, tgt), tgt, np.random.default_rng(0))
        np.testing.assert_array_equal(W.rows[3], W_src.rows[2])
        assert report.rows[3]["source"] == "s2"
        assert report.copied == [3] and report.random == [0, 1, 2]

    def test_conflict_exact_tie_takes_lowest_source(self, W_src, src, tgt):
        entries = [None] * 6
        entries[4], entries[1] = (0, 0.7), (0, 0.7)
        W, _ = transfer_embeddings(W_src, table(entries, src, tgt), tgt, np.random.default_rng(0))
        np.testing.assert_array_equal(W.rows[0], W_src.rows[1])

    def test_bijection_consumes_no_randomness(self):
        s, t = inv("s", 4), inv("t", 4)
        W_src = EmbeddingMatrix(np.arange(12.0).reshape(4, 3), s)
        rng = np.random.default_rng(0)
        state = rng.bit_generator.state
        W, report = transfer_embeddings(W_src, table([(3, .9), (2, .9), (1, .9), (0, .9)], s, t), t, rng)
        np.testing.assert_array_equal(W.rows, W_src.rows[::-1])
        assert rng.bit_generator.state == state
        assert report.random == []

    def test_empty_table_matches_distribution(self):
        s, t = inv("s", 5), inv("t", 50)
        W_src = EmbeddingMatrix(np.zeros((5, 400)), s)
        W, _ = transfer_embeddings(W_src, table([None] * 5, s, t), t, np.random.default_rng(7))
        assert W.rows.size >= 10**4
        assert abs(W.rows.mean()) < 0.02
        assert abs(W.rows.std() - 0.3) < 0.02

    def test_rows_partition_into_copies_and_fresh(self, W_src, src, tgt):
        entries = [(0, .9), None, (2, .5), (2, .6), None, None]
        W, report = transfer_embeddings(W_src, table(entries, src, tgt), tgt, np.random.default_rng(1))
        assert sorted(report.copied + report.random) == list(range(len(tgt)))
        for j in report.copied:
            i = src.index(report.rows[j]["source"])
            np.testing.assert_array_equal(W.rows[j], W_src.rows[i])
        src_rows = {r.tobytes() for r in W_src.rows}
        assert all(W.rows[j].tobytes() not in src_rows for j in report.random)

    def test_relabeling_sources_leaves_result_unchanged(self, W_src, src, tgt):
        entries = [(0, .9), None, (2, .5), (2, .6), (1, .45), None]
        base, _ = transfer_embeddings(W_src, table(entries, src, tgt), tgt, np.random.default_rng(2))
        perm = np.random.default_rng(3).permutation(6)  # new index of old source i is perm[i]
        src2 = SymbolInventory(tuple(src[int(np.argsort(perm)[k])] for k in range(6)))
        rows2 = np.empty_like(W_src.rows)
        rows2[perm] = W_src.rows
        entries2 = [None] * 6
        for i, e in enumerate(entries):
            entries2[perm[i]] = e
        W2, _ = transfer_embeddings(EmbeddingMatrix(rows2, src2), table(entries2, src2, tgt), tgt,
                                    np.random.default_rng(2))
        np.testing.assert_array_equal(W2.rows, base.rows)

    def test_digest_mismatch(self, W_src, src, tgt):
        with pytest.raises(IntegrityError):
            transfer_embeddings(W_src, table([None] * 6, src, inv("u", 4)), tgt, np.random.default_rng(0))


class TestUnifiedTransfer:
    def test_shared_rows_copied_rest_random(self):
        s, t = SymbolInventory(("a", "b", "c")), SymbolInventory(("x", "b2", "a2", "y"))
        W_src = EmbeddingMatrix(np.eye(3), s)
        pairs = parse_pair_table("# shared sounds\na\ta2\nb\tb2  # same\n", s, t)
        W, report = unified_transfer(W_src, pairs, t, np.random.default_rng(0))
        np.testing.assert_array_equal(W.rows[2], [1, 0, 0])
        np.testing.assert_array_equal(W.rows[1], [0, 1, 0])
        assert report.random == [0, 3]

    def test_empty_file_equals_separate(self, src, tgt):
        W_src = EmbeddingMatrix(np.ones((6, 4)), src)
        W, _ = unified_transfer(W_src, parse_pair_table("# nothing\n\n", src, tgt), tgt, np.random.default_rng(9))
        np.testing.assert_array_equal(W.rows, separate_init(tgt, 4, np.random.default_rng(9)).rows)

    def test_unknown_symbol_names_line(self, src, tgt):
        with pytest.raises(InvalidArgumentError, match=r"line 3: unknown target symbol 'q'"):
            parse_pair_table("s0\tt0\n# c\ns1\tq\n", src, tgt)

    def test_conflicting_targets_rejected(self, src, tgt):
        with pytest.raises(InvalidArgumentError, match="t1"):
            parse_pair_table("s0\tt1\ns2\tt1\n", src, tgt)
        with pytest.raises(InvalidArgumentError):
            unified_transfer(EmbeddingMatrix(np.ones((6, 2)), src), [(0, 1), (2, 1)], tgt, np.random.default_rng(0))


class TestSeparateInit:
    def test_deterministic_per_seed(self, tgt):
        a = separate_init(tgt, 16, np.random.default_rng(11))
        b = separate_init(tgt, 16, np.random.default_rng(11))
        c = separate_init(tgt, 16, np.random.default_rng(12))
        np.testing.assert_array_equal(a.rows, b.rows)
        assert not np.array_equal(a.rows, c.rows)

    def test_distribution(self):
        W = separate_init(inv("t", 100), 100, np.random.default_rng(13)).rows
        assert abs(W.mean()) < 0.02
        assert abs(W.std() - 0.3) < 0.02

    def test_width_validated(self, tgt):
        with pytest.raises(InvalidArgumentError):
            separate_init(tgt, 0, np.random.default_rng(0))
