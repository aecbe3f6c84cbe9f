import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oam_mgm.xtalk import CrosstalkTable, fiber_only_xt, table_1km, table_18km, xt_at_length


def oracle_fiber_xt(xt_long, xt_short, delta_km=17.4):
    lin = [10 ** (a / 10) - 10 ** (b / 10) for a, b in zip(xt_long, xt_short)]
    avg = sum(lin) / len(lin)
    return 10 * math.log10(avg), 10 * math.log10(avg / delta_km)


class TestTables:
    @pytest.mark.parametrize("src,dst,value", [(2, 3, -11.26), (4, 1, -20.99), (1, 2, -4.43), (3, 4, -14.05)])
    def test_table_1km(self, src, dst, value):
        assert table_1km().xt(src, dst) == value

    @pytest.mark.parametrize("src,dst,value", [(2, 4, -7.66), (3, 2, -7.33), (4, 3, -7.9)])
    def test_table_18km(self, src, dst, value):
        assert table_18km().xt(src, dst) == value

    @pytest.mark.parametrize("table", [table_1km(), table_18km()])
    def test_diagonal(self, table):
        assert all(table.xt(g, g) == 0.0 for g in table.groups)

    def test_lengths(self):
        assert table_1km().system_length_km == 1.0
        assert table_18km().system_length_km == 18.4

    def test_subset_order(self):
        m = table_1km().subset((4, 2))
        assert m == ((0.0, -17.29), (-18.04, 0.0))
        with pytest.raises(KeyError):
            table_18km().subset((1, 2))

    @pytest.mark.parametrize("xt", [((0, -1), (-1, 1)), ((0, 0), (-1, 0)), ((0, -1),)])
    def test_validation(self, xt):
        with pytest.raises(ValueError):
            CrosstalkTable((1, 2), xt, 1.0)

    @pytest.mark.parametrize("table", [table_1km(), table_18km()])
    def test_csv_round_trip(self, table):
        back = CrosstalkTable.from_csv(table.to_csv(), table.system_length_km, table.label)
        assert back == table

    def test_csv_header(self):
        assert table_18km().to_csv().splitlines()[0] == "source\\destination,|l|=2,|l|=3,|l|=4"


class TestFiberOnly:
    def test_pair_3_4(self):
        over, per_km = fiber_only_xt(table_1km(), table_18km(), (3, 4))
        assert over == pytest.approx(-9.65, abs=0.05)
        assert (over, per_km) == pytest.approx(oracle_fiber_xt((-8.68, -7.9), (-14.05, -13.8)), abs=1e-12)

    def test_pair_2_3(self):
        over, _ = fiber_only_xt(table_1km(), table_18km(), (2, 3))
        assert over == pytest.approx(-7.58, abs=0.05)
        assert over == pytest.approx(oracle_fiber_xt((-5.19, -7.33), (-11.26, -11.94))[0], abs=1e-12)

    def test_pair_order_irrelevant(self):
        assert fiber_only_xt(table_1km(), table_18km(), (4, 3)) == pytest.approx(
            fiber_only_xt(table_1km(), table_18km(), (3, 4)))

    def test_identical_tables(self):
        with pytest.raises(ValueError):
            fiber_only_xt(table_18km(), table_18km(), (3, 4))

    def test_missing_pair(self):
        with pytest.raises(KeyError):
            fiber_only_xt(table_1km(), table_18km(), (1, 2))

    def test_per_km_scaling(self):
        over, per_km = fiber_only_xt(table_1km(), table_18km(), (3, 4))
        assert xt_at_length(per_km, 17.4) == pytest.approx(over, abs=1e-12)


@given(st.floats(-40, -1), st.floats(0.01, 100))
def test_xt_at_length_linear_power(xt, length):
    assert 10 ** (xt_at_length(xt, length) / 10) == pytest.approx(length * 10 ** (xt / 10), rel=1e-12)
