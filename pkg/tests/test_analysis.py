from __future__ import annotations

import pytest

from narrative_enrich.analysis import (
    EXPANDED_KEY,
    categorize_section,
    non_expansion_stats,
    positional_relevance,
    section_categories,
)
from narrative_enrich.reversum import NON_EXPANSION_REASONS


def _outcome(title, expanded=True, reason=None, positions=None):
    trace = []
    if positions is not None:
        trace.append(
            {
                "stage": "retrieval",
                "parsed": list(range(len(positions))),
                "info": {"relative_positions": positions},
            }
        )
    return {
        "section_title": title,
        "expanded": expanded,
        "reason": reason,
        "trace": trace,
    }


class TestCategorize:
    def test_exactly_ten_categories(self):
        assert len(section_categories()) == 10

    def test_first_match_wins(self):
        assert categorize_section("Early life and education") == "Early life"

    def test_no_keyword_falls_to_other(self):
        assert categorize_section("Quantum contributions") == "Other"

    def test_military_career_is_military(self):
        assert categorize_section("Military career") == "Military activities"

    @pytest.mark.parametrize(
        "title,expected",
        [
            ("Education", "Education"),
            ("Political involvement", "Political involvement"),
            ("Awards and honours", "Awards and honors"),
            ("Death and legacy", "Death and legacy"),
            ("Personal life", "Personal life"),
            ("Published works", "Works"),
            ("Career", "Career"),
            ("EARLY LIFE", "Early life"),
        ],
    )
    def test_keyword_table(self, title, expected):
        assert categorize_section(title) == expected

    def test_total_and_deterministic(self):
        titles = ["", "x", "Life & Times", "1942", "Career . Career"]
        for title in titles:
            assert categorize_section(title) == categorize_section(title)


class TestPositionalRelevance:
    def test_mean_of_positions(self):
        out = positional_relevance([_outcome("Early life", positions=[0.1, 0.3])])
        assert out["Early life"] == pytest.approx(0.2)

    def test_category_ordering_fixture(self):
        outcomes = [
            _outcome("Early life", positions=[0.05, 0.15, 0.2]),
            _outcome("Early years abroad", positions=[0.1, 0.25]),
            _outcome("Political involvement", positions=[0.7, 0.8]),
            _outcome("Political career", positions=[0.65, 0.9]),
        ]
        means = positional_relevance(outcomes)
        assert means["Early life"] < 0.3
        assert means["Political involvement"] > 0.6

    def test_blocked_sections_contribute_nothing(self):
        blocked = _outcome("Early life", expanded=False, reason="retrieval")
        assert positional_relevance([blocked]) == {}

    def test_empty_categories_omitted(self):
        means = positional_relevance([_outcome("Education", positions=[0.4])])
        assert set(means) == {"Education"}


class TestNonExpansionStats:
    def test_exact_percentages(self):
        outcomes = []
        plan = {
            "retrieval": 16,
            "relevance_detection": 12,
            "evidence_collection": 3,
            "evidence_verification": 19,
            "summary_generation": 1,
        }
        for reason, count in plan.items():
            outcomes += [
                _outcome(f"{reason} {i}", expanded=False, reason=reason)
                for i in range(count)
            ]
        outcomes += [_outcome(f"ok {i}") for i in range(49)]
        stats = non_expansion_stats(outcomes)
        for reason, count in plan.items():
            assert stats[reason] == pytest.approx(count)
        assert stats[EXPANDED_KEY] == pytest.approx(49.0)

    def test_all_expanded(self):
        stats = non_expansion_stats([_outcome(f"s{i}") for i in range(4)])
        assert all(stats[r] == 0.0 for r in NON_EXPANSION_REASONS)
        assert stats[EXPANDED_KEY] == 100.0

    def test_single_blocked_among_four(self):
        outcomes = [_outcome("a"), _outcome("b"), _outcome("c")]
        outcomes.append(_outcome("d", expanded=False, reason="retrieval"))
        stats = non_expansion_stats(outcomes)
        assert stats["retrieval"] == pytest.approx(25.0)

    def test_percentages_sum_to_hundred(self):
        outcomes = [
            _outcome("a"),
            _outcome("b", expanded=False, reason="retrieval"),
            _outcome("c", expanded=False, reason="summary_generation"),
        ]
        stats = non_expansion_stats(outcomes)
        assert sum(stats.values()) == pytest.approx(100.0, abs=1e-9)

    def test_empty_input(self):
        stats = non_expansion_stats([])
        assert stats[EXPANDED_KEY] == 0.0
