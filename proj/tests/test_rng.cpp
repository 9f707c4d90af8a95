#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cbctcad/rng.hpp"

using namespace cbctcad;

TEST_SUITE("rng") {

TEST_CASE("same seed reproduces the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
    CHECK(same == 0);
}

TEST_CASE("forks depend only on the parent's seed, not consumption") {
    Rng parent(7);
    const std::uint64_t before = Rng(7).fork("child").next_u64();
    for (int i = 0; i < 10; ++i) parent.next_u64();  // consume the parent
    CHECK(parent.fork("child").next_u64() == before);
    CHECK(parent.fork("a").next_u64() != parent.fork("b").next_u64());
}

TEST_CASE("uniform01 stays in [0, 1)") {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("uniform respects bounds and rejects inverted ones") {
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform(-2.5, 3.5);
        CHECK(u >= -2.5);
        CHECK(u < 3.5);
    }
    CHECK_THROWS_AS(rng.uniform(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("jitter is a multiplicative factor around 1") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double j = rng.jitter(0.1);
        CHECK(j >= 0.9);
        CHECK(j <= 1.1);
    }
}

TEST_CASE("uniform_int covers the inclusive range") {
    Rng rng(6);
    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 1000; ++i) {
        const int v = rng.uniform_int(2, 5);
        CHECK(v >= 2);
        CHECK(v <= 5);
        saw_lo = saw_lo || v == 2;
        saw_hi = saw_hi || v == 5;
    }
    CHECK(saw_lo);
    CHECK(saw_hi);
    CHECK_THROWS_AS(rng.uniform_int(3, 1), std::invalid_argument);
}

TEST_CASE("normal draws have roughly the requested moments") {
    Rng rng(8);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal(1.0, 2.0);
        CHECK(std::isfinite(v));
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
    CHECK(sd == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    std::vector<int> w = v;
    Rng a(9), b(9);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    // A 50-element shuffle that returns the identity would be astronomical.
    bool moved = false;
    for (int i = 0; i < 50; ++i) moved = moved || v[i] != i;
    CHECK(moved);
}

}  // TEST_SUITE
