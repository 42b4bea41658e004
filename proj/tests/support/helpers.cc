#include "helpers.h"

#include <atomic>
#include <unistd.h>

namespace qqse::testing {

const Catalog& shipped_catalog() {
  static const Catalog catalog = load_catalog(QQSE_TEST_CATALOG);
  return catalog;
}

std::filesystem::path scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("qqse-" + name + "-" + std::to_string(getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string fixture_path(const std::string& relative) {
  return std::string(QQSE_TEST_FIXTURE_DIR) + "/" + relative;
}

HyperParams tiny_hyperparams(std::uint64_t seed) {
  HyperParams hp;
  hp.max_len_query = 5;
  hp.max_len_cq = 6;
  hp.max_len_ans = 6;
  hp.cnn_filter_widths = {1, 2};
  hp.cnn_filters_per_width = 3;
  hp.cnn_fc_out = 4;
  hp.lstm_hidden = 3;
  hp.head_hidden = 5;
  hp.seed = seed;
  return hp;
}

EmbeddingTable random_table(const std::vector<std::string>& tokens, std::size_t dim,
                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<std::string, std::vector<float>>> entries;
  for (const auto& t : tokens) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    entries.emplace_back(t, std::move(v));
  }
  return EmbeddingTable::from_entries(entries);
}

}  // namespace qqse::testing
