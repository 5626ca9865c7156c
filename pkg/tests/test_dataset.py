import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmmoments.dataset import (
    Group,
    GroupedDataset,
    emit_csv,
    load_csv,
    read_csv,
    validate_for_order,
    write_csv,
)
from lmmoments.errors import EmptyData, GroupTooSmall, ParseError, UsageError

from conftest import make_dataset, parse


def _sized(sizes):
    sizes = np.asarray(sizes)
    N = int(sizes.sum())
    return GroupedDataset(
        ids=tuple(f"g{i}" for i in range(len(sizes))),
        sizes=sizes,
        x=np.arange(N, dtype=float).reshape(N, 1),
        y=np.ones(N),
    )


class TestLoad:
    def test_three_rows_two_groups(self):
        ds = parse("group,y,x1\na,1.0,0.5\na,2.0,1.5\nb,3.0,2.5\n")
        assert (ds.n, ds.N, ds.p) == (2, 3, 1)
        assert ds.ids == ("a", "b")
        np.testing.assert_array_equal(ds.sizes, [2, 1])

    def test_250_rows_50_groups(self, tmp_path):
        lines = ["group,y,x1,x2"]
        for r in range(250):
            lines.append(f"grp{r % 50},{r * 0.1},{r},{-r}")
        path = tmp_path / "d.csv"
        path.write_text("\n".join(lines) + "\n")
        ds = load_csv(path)
        assert ds.n == 50 and ds.p == 2 and ds.N == 250

    def test_bad_value_reports_row(self):
        rows = ["group,y,x1"] + [f"g{i},1.0,2.0" for i in range(5)] + ["g9,abc,1.0"]
        with pytest.raises(ParseError) as info:
            parse("\n".join(rows) + "\n")
        assert info.value.row == 7
        assert "7" in str(info.value)

    def test_first_appearance_order_and_noncontiguous_labels(self):
        ds = parse("group,y\nz,1\na,2\nz,3\n")
        assert ds.ids == ("z", "a")
        np.testing.assert_array_equal(ds.group(0).y, [1.0, 3.0])
        assert ds.p == 0

    @pytest.mark.parametrize(
        "text",
        [
            "group,x,y\n1,2,3\n",
            "grp,y\n1,2\n",
            "group,y,x2\n1,2,3\n",
        ],
    )
    def test_bad_header(self, text):
        with pytest.raises(ParseError) as info:
            parse(text)
        assert info.value.row == 1

    def test_wrong_width(self):
        with pytest.raises(ParseError) as info:
            parse("group,y,x1\n1,2,3\n1,2\n")
        assert info.value.row == 3

    @pytest.mark.parametrize("cell", ["nan", "inf", "-inf"])
    def test_non_finite_rejected(self, cell):
        with pytest.raises(ParseError):
            parse(f"group,y\n1,{cell}\n")

    def test_empty(self):
        with pytest.raises(EmptyData):
            parse("")
        with pytest.raises(EmptyData):
            parse("group,y,x1\n")


class TestDataset:
    def test_counts(self, rng):
        ds = make_dataset(rng, [3, 1, 4])
        assert ds.N == 8 and ds.n == 3
        assert [g.size for g in ds.groups] == [3, 1, 4]

    def test_rejects_bad_construction(self):
        with pytest.raises(UsageError):
            GroupedDataset(ids=("a",), sizes=np.array([0]), x=np.zeros((0, 0)), y=np.zeros(0))
        with pytest.raises(UsageError):
            GroupedDataset(ids=("a", "a"), sizes=np.array([1, 1]), x=np.zeros((2, 0)), y=np.zeros(2))
        with pytest.raises(UsageError):
            GroupedDataset(ids=("a",), sizes=np.array([1]), x=np.zeros((1, 0)), y=np.array([np.nan]))
        with pytest.raises(UsageError):
            Group("a", np.zeros((2, 1)), np.zeros(3))

    def test_from_groups_roundtrip(self, rng):
        ds = make_dataset(rng, [2, 5])
        assert GroupedDataset.from_groups(ds.groups) == ds

    def test_immutable(self, rng):
        ds = make_dataset(rng, [2, 2])
        with pytest.raises(ValueError):
            ds.y[0] = 1.0


class TestRoundTrip:
    def test_emit_then_load_is_bit_identical(self, rng, tmp_path):
        ds = make_dataset(rng, [4, 1, 7, 2], p=3)
        path = tmp_path / "r.csv"
        write_csv(ds, path)
        back = load_csv(path)
        assert back == ds
        np.testing.assert_array_equal(back.x.view(np.uint64), ds.x.view(np.uint64))
        assert emit_csv(back) == emit_csv(ds)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=2, max_size=2),
            min_size=1,
            max_size=12,
        ),
        st.integers(1, 4),
    )
    def test_roundtrip_property(self, rows, ngroups):
        ids = [str(i % ngroups) for i in range(len(rows))]
        text = "group,y,x1\n" + "".join(f"{g},{r[0]!r},{r[1]!r}\n" for g, r in zip(ids, rows))
        ds = read_csv(io.StringIO(text))
        assert read_csv(io.StringIO(emit_csv(ds))) == ds


class TestValidateForOrder:
    def test_strict_unchanged(self):
        ds = _sized([4, 4, 4])
        out, report = validate_for_order(ds, 4, "strict")
        assert out is ds and not report.any

    def test_drop_names_small_group(self):
        ds = _sized([4, 3, 5])
        with pytest.warns(UserWarning):
            out, report = validate_for_order(ds, 4, "drop")
        np.testing.assert_array_equal(out.sizes, [4, 5])
        assert out.ids == ("g0", "g2")
        assert report.dropped == (("g1", 3),)

    def test_strict_raises(self):
        with pytest.raises(GroupTooSmall) as info:
            validate_for_order(_sized([2, 2]), 3, "strict")
        assert info.value.group_id == "g0"

    def test_drop_idempotent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            once, _ = validate_for_order(_sized([1, 5, 2, 6]), 3)
            twice, report = validate_for_order(once, 3)
        assert twice == once and not report.any

    def test_all_dropped(self):
        with pytest.raises(EmptyData), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            validate_for_order(_sized([1, 2]), 4)

    @pytest.mark.parametrize("k,policy", [(5, "drop"), (4, "lenient")])
    def test_bad_arguments(self, k, policy):
        with pytest.raises(UsageError):
            validate_for_order(_sized([4]), k, policy)
