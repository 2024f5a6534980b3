// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "motor/similarity.hpp"
#include "test_support.hpp"

namespace motor {
namespace {

using testing::vec;

TEST(CosineSimilarity, Examples) {
    const auto a = vec({0.3f, -1.7f, 2.5f});
    EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({0, 1})), 0.0);
    EXPECT_NEAR(cosine_similarity(vec({1, 0}), vec({1, 1})), std::numbers::sqrt2 / 2.0, 1e-9);
}

TEST(CosineSimilarity, DimensionMismatch) {
    try {
        cosine_similarity(vec({1, 0}), vec({1, 0, 0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kDimensionMismatch);
    }
}

TEST(CosineSimilarity, ZeroVectorIsZero) {
    EXPECT_EQ(cosine_similarity(vec({0, 0}), vec({1, 1})), 0.0);
    EXPECT_EQ(cosine_similarity(vec({1, 1}), vec({0, 0})), 0.0);
}

TEST(CosineSimilarity, ClampedToUnitInterval) {
    testing::Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = rng.embedding(64);
        EXPECT_LE(cosine_similarity(a, a), 1.0);
        const auto neg = a.values();
        std::vector<float> flipped(neg.begin(), neg.end());
        for (auto& x : flipped) {
            x = -x;
        }
        EXPECT_GE(cosine_similarity(a, EmbeddingVector(flipped)), -1.0);
    }
}

TEST(CosineSimilarity, SymmetricAndScaleInvariant) {
    testing::Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const auto dim = rng.index(1, 64);
        const auto a = rng.embedding(dim);
        const auto b = rng.embedding(dim);
        EXPECT_EQ(cosine_similarity(a, b), cosine_similarity(b, a));

        const double c = rng.uniform(1e-3, 1e3);
        std::vector<double> da(a.values().begin(), a.values().end());
        std::vector<double> scaled = da;
        for (auto& x : scaled) {
            x *= c;
        }
        const std::vector<double> db(b.values().begin(), b.values().end());
        EXPECT_NEAR(cosine_similarity(std::span<const double>(scaled), std::span<const double>(db)),
                    cosine_similarity(std::span<const double>(da), std::span<const double>(db)), 1e-12);
    }
}

TEST(SimilarityMatrix, OrthonormalPair) {
    const std::vector<EmbeddingVector> a = {vec({1, 0}), vec({0, 1})};
    const auto m = similarity_matrix(a, a);
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m(0, 0), 1.0);
    EXPECT_EQ(m(0, 1), 0.0);
    EXPECT_EQ(m(1, 0), 0.0);
    EXPECT_EQ(m(1, 1), 1.0);
}

TEST(SimilarityMatrix, EmptyLeftSide) {
    const std::vector<EmbeddingVector> b = {vec({1, 0}), vec({0, 1}), vec({1, 1})};
    const auto m = similarity_matrix({}, b);
    EXPECT_EQ(m.rows(), 0u);
    EXPECT_EQ(m.cols(), 3u);
}

TEST(SimilarityMatrix, HandComputedRow) {
    const auto m = similarity_matrix({vec({1, 0})}, {vec({1, 0}), vec({1, 1}), vec({0, 1})});
    ASSERT_EQ(m.rows(), 1u);
    ASSERT_EQ(m.cols(), 3u);
    EXPECT_NEAR(m(0, 0), 1.0, 1e-9);
    EXPECT_NEAR(m(0, 1), std::numbers::sqrt2 / 2.0, 1e-9);
    EXPECT_NEAR(m(0, 2), 0.0, 1e-9);
}

TEST(SimilarityMatrix, DimensionChecks) {
    EXPECT_THROW(similarity_matrix({vec({1, 0})}, {vec({1, 0, 0})}), Error);
    EXPECT_THROW(similarity_matrix({vec({1, 0}), vec({1, 0, 0})}, {vec({1, 0})}), Error);
}

TEST(SimilarityMatrix, TransposeProperty) {
    testing::Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto dim = rng.index(1, 16);
        std::vector<EmbeddingVector> a(rng.index(0, 5)), b(rng.index(0, 5));
        for (auto& v : a) v = rng.embedding(dim);
        for (auto& v : b) v = rng.embedding(dim);
        const auto ab = similarity_matrix(a, b);
        const auto ba = similarity_matrix(b, a).transposed();
        ASSERT_EQ(ab.rows(), ba.rows());
        ASSERT_EQ(ab.cols(), ba.cols());
        for (std::size_t i = 0; i < ab.size(); ++i) {
            EXPECT_NEAR(ab.values()[i], ba.values()[i], 1e-12);
        }
    }
}

}  // namespace
}  // namespace motor
