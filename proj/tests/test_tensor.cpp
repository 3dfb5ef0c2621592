#include <limits>
#include <vector>

#include "doctest.h"
#include "rulkit/errors.hpp"
#include "rulkit/parameter_set.hpp"
#include "rulkit/tensor.hpp"

using rulkit::ParameterSet;
using rulkit::Tensor;

TEST_CASE("tensor rejects bad construction") {
    CHECK_THROWS_AS((Tensor({2, 3}, {1.0, 2.0})), rulkit::ConfigError);
    CHECK_THROWS_AS(Tensor(std::vector<std::int64_t>{}), rulkit::ConfigError);
    CHECK_THROWS_AS((Tensor({2, 2, 2, 2})), rulkit::ConfigError);
    CHECK_THROWS_AS((Tensor({-1})), rulkit::ConfigError);
}

TEST_CASE("tensor layout is row-major") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.at(0, 2) == 3);
    CHECK(t.at(1, 0) == 4);
    CHECK(t.rank() == 2);
    CHECK(t.size() == 6);
}

TEST_CASE("max_abs_diff and equality") {
    Tensor a({3}, {1, 2, 3}), b({3}, {1, 2.5, 3});
    CHECK(Tensor::max_abs_diff(a, b) == doctest::Approx(0.5));
    CHECK(a == a);
    CHECK(!(a == b));
}

TEST_CASE("all_finite flags bad values") {
    Tensor t({2}, {1.0, 2.0});
    CHECK(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK(!t.all_finite());
}

TEST_CASE("parameter set keeps insertion order") {
    ParameterSet p;
    p.add("b", Tensor({2}, {1, 2}));
    p.add("a", Tensor({3}, {3, 4, 5}));
    CHECK(p.count() == 2);
    CHECK(p.entries()[0].name == "b");
    CHECK(p.entries()[1].name == "a");
    CHECK(p.scalar_count() == 5);
    CHECK_THROWS_AS((p.add("a", Tensor({1}, {0.0}))), rulkit::ConfigError);
    CHECK_THROWS_AS(p.get("missing"), rulkit::ConfigError);
}

TEST_CASE("flatten and assign_flat round-trip in order") {
    ParameterSet p;
    p.add("w", Tensor({2, 2}, {1, 2, 3, 4}));
    p.add("b", Tensor({2}, {5, 6}));
    const std::vector<double> flat = p.flatten();
    CHECK(flat == std::vector<double>{1, 2, 3, 4, 5, 6});
    ParameterSet q = p.zeros_like();
    CHECK(q.same_layout(p));
    CHECK(q.get("w")[0] == 0.0);
    q.assign_flat(flat);
    CHECK(q == p);
    CHECK_THROWS_AS(q.assign_flat(std::vector<double>(5, 0.0)), rulkit::ConfigError);
}

TEST_CASE("same_layout is order sensitive") {
    ParameterSet p, q;
    p.add("w", Tensor({2}, {1, 2}));
    p.add("b", Tensor({1}, {3}));
    q.add("b", Tensor({1}, {3}));
    q.add("w", Tensor({2}, {1, 2}));
    CHECK(!p.same_layout(q));
}
