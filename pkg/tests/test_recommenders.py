"""Family generators behind the uniform recommend() dispatch."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relart.corpus import Collection, CollectionKind, CorpusStore, Partner
from relart.index import (
    QueryParser,
    Representation,
    SourceField,
    build_query,
    score,
)
from relart.persistence import InMemoryStore
from relart.textstats import NgramOrder
from relart.recommenders import (
    AlgorithmArm,
    ArmFailure,
    ExternalRecommenderClient,
    Family,
    PopularityMetric,
    RecommenderContext,
    StaticExternalClient,
    StereotypeList,
    load_stereotype_file,
)

from conftest import make_doc, random_corpus


def build_store(docs, collections=("main",)):
    backend = InMemoryStore()
    store = CorpusStore(backend)
    store.add_partner(Partner("p1", "Partner One", "key-1"))
    for cid in collections:
        store.add_collection(Collection(cid, "p1", CollectionKind.PUBLIC))
    for doc in docs:
        stored = store.add_document(
            doc.collection_id,
            doc.original_document_id,
            title=doc.title,
            landing_url=doc.landing_url,
            abstract=doc.abstract,
            view_count=doc.view_count,
            export_count=doc.export_count,
        )
        assert stored is not None and stored.internal_id == doc.internal_id
    return store


def terms_arm(**overrides):
    params = dict(
        source_field="title",
        query_parser="standardQP",
        rerank_readership=False,
        result_count=10,
    )
    params.update(overrides)
    return AlgorithmArm("test-terms", Family.CBF_TERMS, params)


def simple_arm(family, **overrides):
    params = dict(rerank_readership=False, result_count=10)
    params.update(overrides)
    return AlgorithmArm(f"test-{family.value}", family, params)


class TestArmValidation:
    def test_missing_parameter_rejected(self):
        with pytest.raises(ValueError, match="query_parser"):
            AlgorithmArm(
                "bad", Family.CBF_TERMS,
                {"source_field": "title", "rerank_readership": False, "result_count": 5},
            )

    def test_unexpected_parameter_rejected(self):
        with pytest.raises(ValueError, match="ngram_order"):
            terms_arm(ngram_order=2)

    def test_bad_value_rejected(self):
        with pytest.raises(ValueError, match="source_field"):
            terms_arm(source_field="journal")

    def test_result_count_must_be_positive_int(self):
        with pytest.raises(ValueError, match="result_count"):
            simple_arm(Family.CBF_EMBEDDINGS, result_count=0)
        with pytest.raises(ValueError, match="result_count"):
            simple_arm(Family.CBF_EMBEDDINGS, result_count=True)

    def test_wants_rerank_property(self):
        assert terms_arm(rerank_readership=True).wants_rerank
        assert not terms_arm().wants_rerank
        assert not AlgorithmArm(
            "mp", Family.MOST_POPULAR,
            {"popularity_metric": "views", "result_count": 3},
        ).wants_rerank


class TestDispatchContract:
    def setup_method(self):
        self.store = build_store(random_corpus(random.Random(3), 6))
        self.context = RecommenderContext.build(self.store)
        self.doc = self.store.get_by_internal_id(1)

    def test_requires_exactly_one_input(self):
        arm = terms_arm()
        with pytest.raises(ValueError, match="exactly one"):
            self.context.recommend(arm, scope=["main"])
        with pytest.raises(ValueError, match="exactly one"):
            self.context.recommend(
                arm, input_doc=self.doc, query_title="x", scope=["main"]
            )

    def test_query_title_only_for_fallback(self):
        with pytest.raises(ValueError, match="fallback_search"):
            self.context.recommend(terms_arm(), query_title="migration", scope=["main"])

    def test_fallback_rejects_document_input(self):
        arm = AlgorithmArm("fb", Family.FALLBACK_SEARCH, {"result_count": 5})
        with pytest.raises(ValueError, match="query title"):
            self.context.recommend(arm, input_doc=self.doc, scope=["main"])

    def test_k_must_match_arm(self):
        with pytest.raises(ValueError, match="result_count"):
            self.context.recommend(
                terms_arm(result_count=5), input_doc=self.doc, scope=["main"], k=7
            )


class TestTermsAndKeyphrases:
    def test_terms_equals_query_pipeline(self):
        """recommend() is exactly build_query + score + scope cut."""
        docs = random_corpus(random.Random(21), 20)
        store = build_store(docs)
        context = RecommenderContext.build(store)
        doc = store.get_by_internal_id(4)
        arm = terms_arm(source_field="abstract", query_parser="edismaxQP", result_count=6)
        got = context.recommend(arm, input_doc=doc, scope=["main"])

        query = build_query(
            doc,
            context.index,
            Representation.TERMS,
            SourceField.ABSTRACT,
            parser=QueryParser.EDISMAX,
        )
        expected = score(query, context.index, exclude=doc.internal_id)[:6]
        assert [c.internal_id for c in got] == [c.internal_id for c in expected]
        assert [c.relevance_score for c in got] == [c.relevance_score for c in expected]

    def test_keyphrase_count_caps_query_terms(self):
        docs = random_corpus(random.Random(22), 15)
        store = build_store(docs)
        context = RecommenderContext.build(store)
        doc = store.get_by_internal_id(2)
        arm = AlgorithmArm(
            "kp", Family.CBF_KEYPHRASES,
            dict(
                source_field="abstract", ngram_order=1, keyphrase_count=1,
                query_parser="standardQP", rerank_readership=False, result_count=10,
            ),
        )
        got = context.recommend(arm, input_doc=doc, scope=["main"])
        query = build_query(
            doc,
            context.index,
            Representation.KEYPHRASES,
            SourceField.ABSTRACT,
            max_query_terms=1,
            parser=QueryParser.STANDARD,
            ngram_order=NgramOrder.UNIGRAM,
        )
        assert len({qt.term for qt in query.terms}) <= 1
        expected = score(query, context.index, exclude=doc.internal_id)[:10]
        assert got == expected

    def test_scope_filters_before_cutoff(self):
        """A small k must still be filled from in-scope docs further down."""
        rng = random.Random(23)
        docs = random_corpus(rng, 10, "main") + random_corpus(
            rng, 10, "other", first_id=11
        )
        store = build_store(docs, collections=("main", "other"))
        context = RecommenderContext.build(store)
        doc = store.get_by_internal_id(1)
        arm = terms_arm(source_field="abstract", result_count=5)
        only_other = context.recommend(arm, input_doc=doc, scope=["other"])
        assert all(11 <= c.internal_id <= 20 for c in only_other)
        both = context.recommend(arm, input_doc=doc, scope=["main", "other"])
        assert doc.internal_id not in [c.internal_id for c in both]


class TestEmbeddingsFamily:
    def test_matches_vector_index_with_scope(self):
        rng = random.Random(31)
        docs = random_corpus(rng, 12, "main") + random_corpus(
            rng, 6, "other", first_id=13
        )
        store = build_store(docs, collections=("main", "other"))
        context = RecommenderContext.build(store)
        doc = store.get_by_internal_id(3)
        arm = simple_arm(Family.CBF_EMBEDDINGS, result_count=4)
        got = context.recommend(arm, input_doc=doc, scope=["main"])
        assert len(got) == 4
        assert all(1 <= c.internal_id <= 12 for c in got)
        assert doc.internal_id not in [c.internal_id for c in got]

        vector = context.vectors.vector_for(doc.internal_id)
        expected = context.vectors.nearest(
            vector, 4, exclude=doc.internal_id,
            allowed=lambda i: i <= 12,
        )
        assert got == expected


class TestStereotypeFamily:
    def test_prefix_of_curated_list(self):
        docs = random_corpus(random.Random(41), 8)
        store = build_store(docs)
        persona = StereotypeList("main", (5, 2, 7, 1))
        context = RecommenderContext.build(store, stereotypes={"main": persona})
        arm = simple_arm(Family.STEREOTYPE, result_count=3)
        got = context.recommend(arm, input_doc=store.get_by_internal_id(8), scope=["main"])
        assert [c.internal_id for c in got] == [5, 2, 7]
        assert [c.relevance_score for c in got] == [4.0, 3.0, 2.0]

    def test_input_doc_skipped_not_counted(self):
        docs = random_corpus(random.Random(42), 8)
        store = build_store(docs)
        persona = StereotypeList("main", (5, 2, 7, 1))
        context = RecommenderContext.build(store, stereotypes={"main": persona})
        arm = simple_arm(Family.STEREOTYPE, result_count=3)
        got = context.recommend(arm, input_doc=store.get_by_internal_id(2), scope=["main"])
        assert [c.internal_id for c in got] == [5, 7, 1]

    def test_missing_list_is_arm_failure(self):
        docs = random_corpus(random.Random(43), 4)
        store = build_store(docs)
        context = RecommenderContext.build(store)
        arm = simple_arm(Family.STEREOTYPE)
        with pytest.raises(ArmFailure, match="stereotype"):
            context.recommend(arm, input_doc=store.get_by_internal_id(1), scope=["main"])

    def test_unknown_id_in_list_rejected_at_build(self):
        docs = random_corpus(random.Random(44), 4)
        store = build_store(docs)
        with pytest.raises(ValueError, match="99"):
            RecommenderContext.build(
                store, stereotypes={"main": StereotypeList("main", (1, 99))}
            )

    def test_load_stereotype_file(self, tmp_path):
        path = tmp_path / "persona.txt"
        path.write_text("5\n\n2\n7\n", encoding="utf-8")
        persona = load_stereotype_file(path, "main")
        assert persona == StereotypeList("main", (5, 2, 7))


class TestMostPopularFamily:
    def popular_arm(self, metric="views", k=3):
        return AlgorithmArm(
            "mp", Family.MOST_POPULAR,
            {"popularity_metric": metric, "result_count": k},
        )

    def test_ranked_by_views_ties_ascending(self):
        docs = [
            make_doc(1, view_count=10),
            make_doc(2, view_count=5),
            make_doc(3, view_count=10),
            make_doc(4, view_count=0),
        ]
        store = build_store(docs)
        context = RecommenderContext.build(store)
        got = context.recommend(
            self.popular_arm(k=3), input_doc=store.get_by_internal_id(4), scope=["main"]
        )
        assert [(c.internal_id, c.relevance_score) for c in got] == [
            (1, 10.0), (3, 10.0), (2, 5.0),
        ]

    def test_exports_metric_is_independent(self):
        docs = [
            make_doc(1, view_count=100, export_count=1),
            make_doc(2, view_count=1, export_count=100),
            make_doc(3, view_count=50, export_count=50),
        ]
        store = build_store(docs)
        context = RecommenderContext.build(store)
        got = context.recommend(
            self.popular_arm(metric="exports", k=2),
            input_doc=store.get_by_internal_id(1),
            scope=["main"],
        )
        assert [c.internal_id for c in got] == [2, 3]

    def test_all_zero_counts_ascending_ids(self):
        docs = [make_doc(i) for i in range(1, 6)]
        store = build_store(docs)
        context = RecommenderContext.build(store)
        got = context.recommend(
            self.popular_arm(k=4), input_doc=store.get_by_internal_id(5), scope=["main"]
        )
        assert [c.internal_id for c in got] == [1, 2, 3, 4]

    def test_k_one_single_max(self):
        docs = [make_doc(1, view_count=3), make_doc(2, view_count=8), make_doc(3)]
        store = build_store(docs)
        context = RecommenderContext.build(store)
        got = context.recommend(
            self.popular_arm(k=1), input_doc=store.get_by_internal_id(3), scope=["main"]
        )
        assert [(c.internal_id, c.relevance_score) for c in got] == [(2, 8.0)]

    def test_anchor_with_top_views_excluded(self):
        docs = [make_doc(1, view_count=99), make_doc(2, view_count=5), make_doc(3)]
        store = build_store(docs)
        context = RecommenderContext.build(store)
        got = context.recommend(
            self.popular_arm(k=2), input_doc=store.get_by_internal_id(1), scope=["main"]
        )
        assert [c.internal_id for c in got] == [2, 3]

    def test_merges_across_scope_collections(self):
        docs = [
            make_doc(1, collection_id="main", view_count=5,
                     original_document_id="main-1"),
            make_doc(2, collection_id="other", view_count=9,
                     original_document_id="other-2"),
            make_doc(3, collection_id="main", view_count=7,
                     original_document_id="main-3"),
        ]
        store = build_store(docs, collections=("main", "other"))
        context = RecommenderContext.build(store)
        got = context.most_popular(PopularityMetric.VIEWS, ["main", "other"], 3)
        assert [c.internal_id for c in got] == [2, 3, 1]


class TestExternalFamily:
    def test_maps_known_ids_and_drops_strays(self):
        docs = random_corpus(random.Random(61), 5)
        store = build_store(docs)
        client = StaticExternalClient(
            ["main-doc-3", "nowhere", "main-doc-5", "main-doc-3"]
        )
        context = RecommenderContext.build(store, external_client=client)
        arm = AlgorithmArm("ext", Family.EXTERNAL_API, {"result_count": 10})
        got = context.recommend(arm, input_doc=store.get_by_internal_id(1), scope=["main"])
        assert [c.internal_id for c in got] == [3, 5]
        assert got[0].relevance_score > got[1].relevance_score

    def test_self_reference_dropped(self):
        docs = random_corpus(random.Random(62), 4)
        store = build_store(docs)
        client = StaticExternalClient(["main-doc-1", "main-doc-2"])
        context = RecommenderContext.build(store, external_client=client)
        arm = AlgorithmArm("ext", Family.EXTERNAL_API, {"result_count": 10})
        got = context.recommend(arm, input_doc=store.get_by_internal_id(1), scope=["main"])
        assert [c.internal_id for c in got] == [2]

    def test_failure_becomes_arm_failure(self):
        class Exploding(ExternalRecommenderClient):
            def related_ids(self, title, abstract, limit, timeout_s):
                raise TimeoutError("deadline exceeded")

        docs = random_corpus(random.Random(63), 3)
        store = build_store(docs)
        context = RecommenderContext.build(store, external_client=Exploding())
        arm = AlgorithmArm("ext", Family.EXTERNAL_API, {"result_count": 5})
        with pytest.raises(ArmFailure, match="deadline exceeded"):
            context.recommend(arm, input_doc=store.get_by_internal_id(1), scope=["main"])

    def test_no_client_is_arm_failure(self):
        docs = random_corpus(random.Random(64), 3)
        store = build_store(docs)
        context = RecommenderContext.build(store)
        arm = AlgorithmArm("ext", Family.EXTERNAL_API, {"result_count": 5})
        with pytest.raises(ArmFailure, match="no external"):
            context.recommend(arm, input_doc=store.get_by_internal_id(1), scope=["main"])

    def test_truncated_to_k(self):
        docs = random_corpus(random.Random(65), 6)
        store = build_store(docs)
        client = StaticExternalClient([f"main-doc-{i}" for i in range(2, 7)])
        context = RecommenderContext.build(store, external_client=client)
        arm = AlgorithmArm("ext", Family.EXTERNAL_API, {"result_count": 2})
        got = context.recommend(arm, input_doc=store.get_by_internal_id(1), scope=["main"])
        assert [c.internal_id for c in got] == [2, 3]


class TestFallbackSearchFamily:
    def test_exact_title_ranks_first(self):
        docs = random_corpus(random.Random(71), 10)
        store = build_store(docs)
        context = RecommenderContext.build(store)
        target = store.get_by_internal_id(6)
        arm = AlgorithmArm("fb", Family.FALLBACK_SEARCH, {"result_count": 5})
        got = context.recommend(arm, query_title=target.title, scope=["main"])
        assert got and got[0].internal_id == 6

    def test_no_self_exclusion_for_queries(self):
        """A title query has no anchor document, so nothing is excluded."""
        docs = [make_doc(1, title="refugee integration policy")]
        store = build_store(docs)
        context = RecommenderContext.build(store)
        arm = AlgorithmArm("fb", Family.FALLBACK_SEARCH, {"result_count": 5})
        got = context.recommend(arm, query_title="refugee integration", scope=["main"])
        assert [c.internal_id for c in got] == [1]


@st.composite
def corpus_and_arm(draw):
    seed = draw(st.integers(min_value=0, max_value=10_000))
    rng = random.Random(seed)
    n_main = draw(st.integers(min_value=2, max_value=10))
    n_other = draw(st.integers(min_value=0, max_value=5))
    docs = random_corpus(rng, n_main, "main")
    docs += random_corpus(rng, n_other, "other", first_id=n_main + 1)
    family = draw(st.sampled_from([
        Family.CBF_TERMS, Family.CBF_EMBEDDINGS, Family.MOST_POPULAR,
    ]))
    k = draw(st.integers(min_value=1, max_value=8))
    if family is Family.CBF_TERMS:
        arm = terms_arm(
            source_field=draw(st.sampled_from(["title", "abstract"])),
            query_parser=draw(st.sampled_from(["standardQP", "edismaxQP"])),
            result_count=k,
        )
    elif family is Family.CBF_EMBEDDINGS:
        arm = simple_arm(Family.CBF_EMBEDDINGS, result_count=k)
    else:
        arm = AlgorithmArm(
            "mp", Family.MOST_POPULAR,
            {"popularity_metric": draw(st.sampled_from(["views", "exports"])),
             "result_count": k},
        )
    scope = draw(st.sampled_from([("main",), ("main", "other"), ("other",)]))
    anchor = draw(st.integers(min_value=1, max_value=n_main))
    return docs, arm, scope, anchor


class TestUniversalInvariants:
    @settings(max_examples=40, deadline=None)
    @given(corpus_and_arm())
    def test_scope_length_and_self_exclusion(self, case):
        docs, arm, scope, anchor = case
        store = build_store(docs, collections=("main", "other"))
        context = RecommenderContext.build(store)
        doc = store.get_by_internal_id(anchor)
        got = context.recommend(arm, input_doc=doc, scope=scope)
        assert len(got) <= arm.result_count
        ids = [c.internal_id for c in got]
        assert len(ids) == len(set(ids))
        collection_of = {d.internal_id: d.collection_id for d in docs}
        assert all(collection_of[i] in scope for i in ids)
        assert doc.internal_id not in ids
        again = context.recommend(arm, input_doc=doc, scope=scope)
        assert got == again
