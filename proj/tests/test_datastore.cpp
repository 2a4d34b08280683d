#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "srtd/datastore.hpp"
#include "srtd/envsuite.hpp"
#include "support/test_support.hpp"

using namespace srtd;
using test_support::synthetic_dataset;

namespace {

data::MixConfig uniform_mix(const std::vector<env::TaskSpec>& suite,
                            data::Tier tier, std::uint64_t seed) {
  data::MixConfig mix;
  for (const env::TaskSpec& task : suite) mix.tiers[task.task_id] = tier;
  mix.seed = seed;
  return mix;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("tier table cardinalities") {
  SUBCASE("10 tasks all medium-replay give 1500 trajectories") {
    const auto suite = env::make_suite(10, 7);
    const auto mix = uniform_mix(suite, data::Tier::kMediumReplay, 3);
    const data::Dataset dataset = data::generate_dataset(suite, mix);
    CHECK(dataset.trajectories.size() == 1500);
  }

  SUBCASE("mixed 5 MR / 3 RP / 2 ME gives 1150") {
    const auto suite = env::make_suite(10, 7);
    data::MixConfig mix;
    mix.seed = 3;
    for (int i = 0; i < 5; ++i) mix.tiers[i] = data::Tier::kMediumReplay;
    for (int i = 5; i < 8; ++i) mix.tiers[i] = data::Tier::kReplay;
    for (int i = 8; i < 10; ++i) mix.tiers[i] = data::Tier::kMediumExpert;
    const data::Dataset dataset = data::generate_dataset(suite, mix);
    CHECK(dataset.trajectories.size() == 5 * 150 + 3 * 100 + 2 * 50);
    CHECK(mix.describe() == "MR5-RP3-ME2");
  }

  SUBCASE("equal seeds give byte-identical datasets") {
    const auto suite = env::make_suite(3, 7);
    const auto mix = uniform_mix(suite, data::Tier::kReplay, 11);
    data::Dataset a = data::generate_dataset(suite, mix);
    data::Dataset b = data::generate_dataset(suite, mix);
    data::relabel_returns(a);
    data::relabel_returns(b);
    data::save(a, "ds_det_a.bin");
    data::save(b, "ds_det_b.bin");
    CHECK(file_bytes("ds_det_a.bin") == file_bytes("ds_det_b.bin"));
    std::remove("ds_det_a.bin");
    std::remove("ds_det_b.bin");
  }

  SUBCASE("scaling keeps the 3:2:1 ratio") {
    data::MixConfig mix;
    mix.scale(0.2);
    CHECK(mix.episodes_mr == 30);
    CHECK(mix.episodes_rp == 20);
    CHECK(mix.episodes_me == 10);
  }

  SUBCASE("suite/mix task set mismatch is rejected") {
    const auto suite = env::make_suite(3, 7);
    data::MixConfig mix = uniform_mix(suite, data::Tier::kReplay, 1);
    mix.tiers.erase(2);
    CHECK_THROWS(data::generate_dataset(suite, mix));
  }
}

TEST_CASE("generated trajectories respect the environment contract") {
  const auto suite = env::make_suite(3, 7);
  auto mix = uniform_mix(suite, data::Tier::kReplay, 5);
  mix.episodes_rp = 10;
  const data::Dataset dataset = data::generate_dataset(suite, mix);
  for (const data::Trajectory& traj : dataset.trajectories) {
    REQUIRE(traj.length() >= 1);
    CHECK(traj.length() <= 100);
    for (int t = 0; t < traj.length(); ++t) {
      const data::Transition& tr = traj.transitions[t];
      CHECK(tr.r >= 0.0);
      CHECK(tr.r <= 1.0);
      CHECK(tr.s.size() == env::kObsDim);
      CHECK(tr.done == (t + 1 == traj.length()));  // done only at the end
      if (t + 1 < traj.length())
        CHECK((tr.s_next - traj.transitions[t + 1].s).norm() == 0.0);
    }
  }
}

TEST_CASE("relabel_returns") {
  SUBCASE("min-max over {10, 20, 30} gives {0, 0.5, 1}") {
    data::Dataset dataset =
        synthetic_dataset({{10, 1.0}, {10, 2.0}, {10, 3.0}});
    data::relabel_returns(dataset);
    CHECK(dataset.trajectories[0].quality_weight == doctest::Approx(0.0));
    CHECK(dataset.trajectories[1].quality_weight == doctest::Approx(0.5));
    CHECK(dataset.trajectories[2].quality_weight == doctest::Approx(1.0));
    CHECK(dataset.relabeled);
  }

  SUBCASE("single trajectory per task degenerates to weight 1") {
    data::Dataset dataset = synthetic_dataset({{8, 0.3}});
    data::relabel_returns(dataset);
    CHECK(dataset.trajectories[0].quality_weight == 1.0);
  }

  SUBCASE("every task's best trajectory carries weight 1") {
    const auto suite = env::make_suite(4, 2);
    data::MixConfig mix = uniform_mix(suite, data::Tier::kReplay, 9);
    mix.episodes_rp = 25;
    data::Dataset dataset = data::generate_dataset(suite, mix);
    data::relabel_returns(dataset);
    std::map<int, double> best_return;
    std::map<int, double> best_weight;
    for (const data::Trajectory& traj : dataset.trajectories) {
      const double g = traj.episodic_return();
      if (!best_return.contains(traj.task_id) ||
          g > best_return[traj.task_id]) {
        best_return[traj.task_id] = g;
        best_weight[traj.task_id] = traj.quality_weight;
      }
      CHECK(traj.quality_weight >= 0.0);
      CHECK(traj.quality_weight <= 1.0);
    }
    for (const auto& [task, weight] : best_weight)
      CHECK(weight == doctest::Approx(1.0));
  }

  SUBCASE("empty dataset is rejected") {
    data::Dataset dataset;
    CHECK_THROWS(data::relabel_returns(dataset));
  }
}

TEST_CASE("window anchors") {
  SUBCASE("episode of exactly 2n+1 has the single anchor t = n") {
    const int n = 3;
    data::Dataset dataset = synthetic_dataset({{2 * n + 1, 0.5}});
    const auto index = data::AnchorIndex::build(dataset, n);
    REQUIRE(index.anchors.size() == 1);
    CHECK(index.anchors[0].t == n);
  }

  SUBCASE("n=5 with length 100 gives anchors [5, 94], count 90") {
    data::Dataset dataset = synthetic_dataset({{100, 0.5}});
    const auto index = data::AnchorIndex::build(dataset, 5);
    CHECK(index.anchors.size() == 90);
    CHECK(index.anchors.front().t == 5);
    CHECK(index.anchors.back().t == 94);
  }

  SUBCASE("too-short episodes are skipped; all short errors out") {
    data::Dataset dataset = synthetic_dataset({{4, 0.5}});
    Rng rng(1);
    CHECK_THROWS_WITH_AS((void)data::sample_windows(dataset, 4, 5, rng),
                         doctest::Contains(">= 11"), std::invalid_argument);
  }
}

TEST_CASE("window contents line up with the trajectory") {
  const int n = 2;
  data::Dataset dataset = synthetic_dataset({{12, 0.5}});
  dataset.trajectories[0].quality_weight = 0.7;
  const data::WindowSample w = data::extract_window(dataset, 0, 4, n);
  const auto& tr = dataset.trajectories[0].transitions;
  REQUIRE(w.states.size() == 2 * n + 1);
  REQUIRE(w.actions.size() == 2 * n + 1);
  REQUIRE(w.rewards.size() == n + 1);
  REQUIRE(w.next_states.size() == n + 1);
  CHECK(w.quality == 0.7);
  for (int k = 0; k < 2 * n + 1; ++k) {
    CHECK((w.states[k] - tr[4 - n + k].s).norm() == 0.0);
    CHECK((w.actions[k] - tr[4 - n + k].a).norm() == 0.0);
  }
  for (int k = 0; k <= n; ++k) {
    CHECK(w.rewards[k] == tr[4 - n + k].r);
    CHECK((w.next_states[k] - tr[4 - n + k].s_next).norm() == 0.0);
  }

  SUBCASE("flattened views have the advertised lengths") {
    CHECK(data::skill_window_flat(w).size() == 2 * n * (4 + 2));
    CHECK(data::task_window_flat(w).size() == (n + 1) * (4 + 2 + 1));
  }
}

TEST_CASE("anchor sampling is uniform across all valid positions") {
  // two episodes, lengths 31 and 21 with n = 5: 21 + 11 = 32 anchors
  const int n = 5;
  data::Dataset dataset = synthetic_dataset({{31, 0.5}, {21, 0.5}});
  const auto index = data::AnchorIndex::build(dataset, n);
  const int num_anchors = static_cast<int>(index.anchors.size());
  REQUIRE(num_anchors == 32);

  Rng rng(1234);
  std::map<std::pair<int, int>, int> counts;
  const int draws = 10000;
  const int batch = 10;
  for (int i = 0; i < draws / batch; ++i) {
    const data::WindowBatch windows =
        data::sample_windows(dataset, batch, n, rng);
    for (const data::WindowSample& w : windows.items) {
      // identify the anchor by matching the first state
      for (const auto& entry : index.anchors) {
        const auto& tr = dataset.trajectories[entry.trajectory].transitions;
        if ((tr[entry.t - n].s - w.states[0]).norm() == 0.0 &&
            (tr[entry.t].s - w.states[n]).norm() == 0.0) {
          ++counts[{entry.trajectory, entry.t}];
          break;
        }
      }
    }
  }

  const double expected = static_cast<double>(draws) / num_anchors;
  const double sigma =
      std::sqrt(draws * (1.0 / num_anchors) * (1.0 - 1.0 / num_anchors));
  int total = 0;
  for (const auto& [key, count] : counts) {
    total += count;
    CHECK(std::abs(count - expected) <= 3.0 * sigma);
  }
  CHECK(total == draws);
}

TEST_CASE("dataset save/load") {
  SUBCASE("round trip is the identity on a small dataset") {
    data::Dataset dataset =
        synthetic_dataset({{12, 0.25}, {13, 0.5}, {14, 0.75}});
    data::relabel_returns(dataset);
    dataset.trajectories[1].origin = data::Origin::kImagined;
    data::save(dataset, "ds_rt.bin");
    const data::Dataset loaded = data::load("ds_rt.bin");
    REQUIRE(loaded.trajectories.size() == dataset.trajectories.size());
    CHECK(loaded.relabeled == dataset.relabeled);
    for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
      const auto& a = dataset.trajectories[i];
      const auto& b = loaded.trajectories[i];
      CHECK(a.task_id == b.task_id);
      CHECK(a.origin == b.origin);
      CHECK(a.quality_weight == b.quality_weight);
      REQUIRE(a.length() == b.length());
      for (int t = 0; t < a.length(); ++t) {
        CHECK((a.transitions[t].s - b.transitions[t].s).norm() == 0.0);
        CHECK((a.transitions[t].a - b.transitions[t].a).norm() == 0.0);
        CHECK(a.transitions[t].r == b.transitions[t].r);
        CHECK((a.transitions[t].s_next - b.transitions[t].s_next).norm() ==
              0.0);
        CHECK(a.transitions[t].done == b.transitions[t].done);
      }
    }
    std::remove("ds_rt.bin");
  }

  SUBCASE("dimension mismatch is named in the error") {
    data::Dataset dataset = synthetic_dataset({{5, 0.5}}, 0, 6, 2);
    data::save(dataset, "ds_dim.bin");
    CHECK_THROWS_WITH_AS((void)data::load("ds_dim.bin"),
                         doctest::Contains("observation dimension"),
                         FormatError);
    std::remove("ds_dim.bin");
  }

  SUBCASE("truncated payload is a format error") {
    data::Dataset dataset = synthetic_dataset({{20, 0.5}});
    data::save(dataset, "ds_trunc.bin");
    const std::string bytes = file_bytes("ds_trunc.bin");
    std::ofstream out("ds_trunc.bin", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
    out.close();
    CHECK_THROWS_AS((void)data::load("ds_trunc.bin"), FormatError);
    std::remove("ds_trunc.bin");
  }

  SUBCASE("corrupted header is a format error") {
    data::Dataset dataset = synthetic_dataset({{5, 0.5}});
    data::save(dataset, "ds_hdr.bin");
    std::string bytes = file_bytes("ds_hdr.bin");
    bytes[14] = '!';  // inside the JSON header
    std::ofstream out("ds_hdr.bin", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS((void)data::load("ds_hdr.bin"), FormatError);
    std::remove("ds_hdr.bin");
  }

  SUBCASE("a full mixed dataset round-trips byte-identically") {
    const auto suite = env::make_suite(10, 7);
    data::MixConfig mix;
    mix.seed = 3;
    for (int i = 0; i < 5; ++i) mix.tiers[i] = data::Tier::kMediumReplay;
    for (int i = 5; i < 8; ++i) mix.tiers[i] = data::Tier::kReplay;
    for (int i = 8; i < 10; ++i) mix.tiers[i] = data::Tier::kMediumExpert;
    data::Dataset dataset = data::generate_dataset(suite, mix);
    data::relabel_returns(dataset);
    data::save(dataset, "ds_big_a.bin");
    const data::Dataset loaded = data::load("ds_big_a.bin");
    data::save(loaded, "ds_big_b.bin");
    CHECK(file_bytes("ds_big_a.bin") == file_bytes("ds_big_b.bin"));
    std::remove("ds_big_a.bin");
    std::remove("ds_big_b.bin");
  }
}

TEST_CASE("mix JSON round trip") {
  data::MixConfig mix;
  mix.tiers[0] = data::Tier::kMediumReplay;
  mix.tiers[1] = data::Tier::kReplay;
  mix.tiers[2] = data::Tier::kMediumExpert;
  mix.seed = 7;
  const std::string text = data::mix_to_json(mix);
  const data::MixConfig loaded = data::mix_from_json(text);
  CHECK(loaded.tiers == mix.tiers);
  CHECK(loaded.seed == 7);
  CHECK(loaded.episodes_mr == 150);
  CHECK(loaded.episodes_rp == 100);
  CHECK(loaded.episodes_me == 50);

  const data::MixConfig parsed = data::mix_from_json(
      R"({"tasks": [{"id":0,"tier":"MR"}, {"id":1,"tier":"ME"}], "seed": 7})");
  CHECK(parsed.tiers.at(0) == data::Tier::kMediumReplay);
  CHECK(parsed.tiers.at(1) == data::Tier::kMediumExpert);
  CHECK_THROWS_AS((void)data::mix_from_json(R"({"tasks":[{"id":0,"tier":"Xy"}]})"),
                  FormatError);
}
