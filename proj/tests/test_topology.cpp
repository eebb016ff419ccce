#include <doctest.h>

#include <cmath>
#include <set>

#include "aecs/rng.hpp"
#include "aecs/topology.hpp"
#include "test_support.hpp"

using namespace aecs;

TEST_CASE("descriptor: Mate 40 Pro parses to three clusters") {
  const auto t = load_device_descriptor(fixture("descriptors/mate40pro.json"));
  CHECK(t.cluster_count() == 3);
  CHECK(t.total_cores() == 8);
  CHECK(t.clusters[0].core_count == 1);
  CHECK(t.clusters[0].core_type == CoreType::prime);
  CHECK(t.clusters[1].max_freq_ghz == doctest::Approx(2.54));
  CHECK(t.clusters[2].core_type == CoreType::efficient);
  // Capacity defaults to frequency over the largest frequency.
  CHECK(t.clusters[0].capacity == doctest::Approx(1.0));
  CHECK(t.clusters[1].capacity == doctest::Approx(2.54 / 3.13));
}

TEST_CASE("descriptor: single cluster") {
  const auto t = parse_device_descriptor(R"({"device_name": "flat", "selection_mode": "affinity",
      "clusters": [{"cores": 4, "max_freq_ghz": 2.0, "core_type": "performance"}]})");
  CHECK(t.cluster_count() == 1);
  CHECK(t.total_cores() == 4);
}

TEST_CASE("descriptor: small-to-big input is reordered") {
  const auto t = load_device_descriptor(fixture("descriptors/reversed.json"));
  REQUIRE(t.cluster_count() == 3);
  CHECK(t.clusters[0].max_freq_ghz == doctest::Approx(3.13));
  CHECK(t.clusters[0].core_count == 1);
  CHECK(t.clusters[2].max_freq_ghz == doctest::Approx(2.05));
  CHECK_FALSE(t == load_device_descriptor(fixture("descriptors/mate40pro.json")));  // names differ
  auto renamed = t;
  renamed.device_name = "Huawei Mate 40 Pro";
  CHECK(renamed == load_device_descriptor(fixture("descriptors/mate40pro.json")));
}

TEST_CASE("descriptor: errors name the field") {
  CHECK_THROWS_AS(parse_device_descriptor("not json"), ParseError);
  CHECK_THROWS_WITH_AS(parse_device_descriptor(R"({"device_name": "x", "clusters": []})"),
                       doctest::Contains("zero clusters"), ValidationError);
  CHECK_THROWS_WITH_AS(
      parse_device_descriptor(R"({"device_name": "x", "clusters": [{"cores": 2, "core_type": "prime"}]})"),
      doctest::Contains("max_freq_ghz"), ParseError);
  CHECK_THROWS_WITH_AS(parse_device_descriptor(R"({"device_name": "x", "clusters":
      [{"cores": "two", "max_freq_ghz": 2.0, "core_type": "prime"}]})"),
                       doctest::Contains("cores"), ParseError);
  CHECK_THROWS_WITH(parse_device_descriptor(R"({"device_name": "x", "clusters":
      [{"cores": 2, "max_freq_ghz": 2.0, "core_type": "huge"}]})"),
                    doctest::Contains("core_type"));
  CHECK_THROWS_AS(parse_device_descriptor(R"({"device_name": "x", "clusters":
      [{"cores": 0, "max_freq_ghz": 2.0, "core_type": "prime"}]})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_device_descriptor(R"({"device_name": "x", "clusters":
      [{"cores": 1, "max_freq_ghz": -1.0, "core_type": "prime"}]})"),
                  ValidationError);
}

TEST_CASE("descriptor: serialize round-trips") {
  for (const auto& name : {"descriptors/mate40pro.json", "descriptors/reversed.json"}) {
    const auto t = load_device_descriptor(fixture(name));
    CHECK(parse_device_descriptor(serialize_device_descriptor(t)) == t);
  }
}

TEST_CASE("descriptor: round-trip on random topologies") {
  RngStream rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = random_topology(rng, 4, 4);
    CHECK(parse_device_descriptor(serialize_device_descriptor(t)) == t);
  }
}

TEST_CASE("sysfs: Mate 40 Pro shaped snapshot") {
  const auto t = parse_sysfs_snapshot(fixture("sysfs/mate40pro"), "snap");
  REQUIRE(t.cluster_count() == 3);
  CHECK(t.device_name == "snap");
  CHECK(t.clusters[0].core_count == 1);
  CHECK(t.clusters[1].core_count == 3);
  CHECK(t.clusters[2].core_count == 4);
  CHECK(t.clusters[0].max_freq_ghz == doctest::Approx(3.13));
  CHECK(t.clusters[1].max_freq_ghz == doctest::Approx(2.54));
  CHECK(t.clusters[2].max_freq_ghz == doctest::Approx(2.05));
  CHECK(t.clusters[0].core_type == CoreType::prime);
  CHECK(t.clusters[1].core_type == CoreType::performance);
  CHECK(t.clusters[2].core_type == CoreType::efficient);
  CHECK(t.clusters[1].capacity == doctest::Approx(831.0 / 1024.0));
}

TEST_CASE("sysfs: missing cpu_capacity falls back to frequency") {
  const auto t = parse_sysfs_snapshot(fixture("sysfs/mate40pro_nocap"));
  REQUIRE(t.cluster_count() == 3);
  CHECK(t.clusters[1].capacity == doctest::Approx(2.54 / 3.13));
  CHECK(t.clusters[2].capacity == doctest::Approx(2.05 / 3.13));
}

TEST_CASE("sysfs: one group of equal cores is a single prime cluster") {
  const auto t = parse_sysfs_snapshot(fixture("sysfs/dual"));
  REQUIRE(t.cluster_count() == 1);
  CHECK(t.clusters[0].core_count == 2);
  CHECK(t.clusters[0].core_type == CoreType::prime);
}

TEST_CASE("sysfs: broken snapshots are rejected") {
  CHECK_THROWS_WITH(parse_sysfs_snapshot(fixture("sysfs/bad_reference")), doctest::Contains("cpu9"));
  CHECK_THROWS_WITH(parse_sysfs_snapshot(fixture("sysfs/inconsistent")),
                    doctest::Contains("related_cpus"));
  CHECK_THROWS_WITH(parse_sysfs_snapshot(fixture("sysfs/missing_freq")),
                    doctest::Contains("cpuinfo_max_freq"));
  CHECK_THROWS(parse_sysfs_snapshot(fixture("sysfs/does_not_exist")));
}

TEST_CASE("enumerate: bundled device shapes") {
  CHECK(enumerate_selections(make_topology({2, 6}, {4.32, 3.53})).size() == 20);
  CHECK(enumerate_selections(make_topology({1, 3, 2, 2}, {3.3, 3.15, 2.96, 2.27})).size() == 71);
  CHECK(enumerate_selections(make_topology({1, 3, 4}, {3.13, 2.54, 2.05})).size() == 39);
  CHECK(enumerate_selections(make_topology({2, 2, 4}, {2.86, 2.36, 1.95})).size() == 44);

  auto iphone = make_topology({2, 4}, {3.0, 1.82});
  iphone.selection_mode = SelectionMode::thread_count;
  const auto threads = enumerate_selections(iphone);
  REQUIRE(threads.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(threads[i] == CoreSelection::threads(i + 1));
}

TEST_CASE("enumerate: cardinality and uniqueness on random topologies") {
  RngStream rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_topology(rng, 4, 4);
    std::size_t expected = 1;
    for (const auto& c : t.clusters) expected *= static_cast<std::size_t>(c.core_count + 1);
    --expected;

    // Independent construction: odometer over the count vector.
    std::set<std::vector<int>> explicit_set;
    std::vector<int> counts(t.clusters.size(), 0);
    while (true) {
      std::size_t i = 0;
      while (i < counts.size() && counts[i] == t.clusters[i].core_count) counts[i++] = 0;
      if (i == counts.size()) break;
      ++counts[i];
      explicit_set.insert(counts);
    }

    const auto all = enumerate_selections(t);
    std::set<std::vector<int>> produced;
    for (const auto& s : all) {
      CHECK_NOTHROW(validate(s, t));
      produced.insert(s.counts());
    }
    CHECK(all.size() == expected);
    CHECK(produced == explicit_set);
  }
}

TEST_CASE("capacity factor") {
  const auto mate = make_topology({1, 3, 4}, {3.13, 2.54, 2.05});
  CHECK(capacity_factor(CoreSelection::affinity({1, 0, 0}), mate) == doctest::Approx(1.0));
  CHECK(capacity_factor(CoreSelection::affinity({0, 2, 0}), mate) == doctest::Approx(0.8115).epsilon(1e-4));
  const auto xiaomi = make_topology({2, 6}, {4.32, 3.53});
  CHECK(capacity_factor(CoreSelection::affinity({0, 1}), xiaomi) == doctest::Approx(0.8171).epsilon(1e-4));
  CHECK_THROWS_AS(capacity_factor(CoreSelection::affinity({0, 0, 0}), mate), ValidationError);
}

TEST_CASE("capacity factor is monotone under adding cores") {
  RngStream rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = random_topology(rng, 4, 4);
    for (const auto& s : enumerate_selections(t)) {
      const double base = capacity_factor(s, t);
      CHECK(base > 0.0);
      CHECK(base <= 1.0);
      if (s.counts()[0] > 0) CHECK(base == 1.0);
      for (std::size_t i = 0; i < s.counts().size(); ++i) {
        if (s.counts()[i] == t.clusters[i].core_count) continue;
        auto more = s.counts();
        ++more[i];
        CHECK(capacity_factor(CoreSelection::affinity(more), t) >= base);
      }
    }
  }
}

TEST_CASE("selection parsing and validation") {
  const auto mate = make_topology({1, 3, 4}, {3.13, 2.54, 2.05});
  CHECK(parse_selection("1,2,0", mate) == CoreSelection::affinity({1, 2, 0}));
  CHECK(parse_selection("(0,2,0)", mate) == CoreSelection::affinity({0, 2, 0}));
  CHECK(CoreSelection::affinity({1, 2, 0}).to_string() == "(1,2,0)");
  CHECK_THROWS_AS(parse_selection("0,0,0", mate), ValidationError);
  CHECK_THROWS_AS(parse_selection("2,0,0", mate), ValidationError);
  CHECK_THROWS_AS(parse_selection("1,2", mate), ValidationError);
  CHECK_THROWS(parse_selection("a,b,c", mate));

  auto phone = make_topology({2, 4}, {3.0, 1.82});
  phone.selection_mode = SelectionMode::thread_count;
  CHECK(parse_selection("3", phone) == CoreSelection::threads(3));
  CHECK(CoreSelection::threads(3).to_string() == "3t");
  CHECK_THROWS_AS(parse_selection("7", phone), ValidationError);
  CHECK_THROWS_AS(parse_selection("0", phone), ValidationError);
  CHECK(occupied_counts(CoreSelection::threads(3), phone) == std::vector<int>{2, 1});
}
