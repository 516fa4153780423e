#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "hucd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hucd;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hucd_pipeline_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

// One 48-image toy run shared by the read-only checks.
class ToyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("shared"));
    cfg_ = new PipelineConfig(write_toy_workspace(*dir_, 48, 3));
    cfg_->bench_modes = {MaskingMode::LayerMasking, MaskingMode::InpaintOriginalScale, MaskingMode::CropAndRescale};
    cfg_->bench_traces = true;
    std::ostringstream log;
    bench_ = new BenchResult(cmd_all(*cfg_, log));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete bench_;
    delete cfg_;
    delete dir_;
  }
  static fs::path* dir_;
  static PipelineConfig* cfg_;
  static BenchResult* bench_;
};
fs::path* ToyRun::dir_ = nullptr;
PipelineConfig* ToyRun::cfg_ = nullptr;
BenchResult* ToyRun::bench_ = nullptr;

}  // namespace

TEST(PipelineConfig, JsonRoundTrip) {
  PipelineConfig c;
  c.mode = MaskingMode::CropAndRescale;
  c.bench_modes = {MaskingMode::InpaintOriginalScale, MaskingMode::LayerMasking};
  c.lambda_rel = 0.07;
  c.pooled_ssc = true;
  c.top_k = 9;
  c.seed = 123456789012345ULL;
  c.classes = {2, 0};
  c.explain = {"a", "b"};
  const auto j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
  EXPECT_EQ(to_json(config_from_json(nlohmann::json::object())), to_json(PipelineConfig{}));
}

TEST(PipelineConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json({{"modle", "m.json"}}), ConfigError);
  EXPECT_THROW(config_from_json({{"ssc", {{"lamda_rel", 0.1}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"top_k", "five"}}), ConfigError);
  EXPECT_THROW(config_from_json({{"mode", "blur"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
  for (auto [key, val] : std::vector<std::pair<const char*, nlohmann::json>>{
           {"var_threshold", 0.0}, {"min_area_frac", 1.5}, {"top_k", 0}, {"parallelism", 0}, {"cond_cap", 1.0},
           {"bench_modes", nlohmann::json::array()}}) {
    SCOPED_TRACE(key);
    EXPECT_THROW(config_from_json({{key, val}}).validate(), ConfigError);
  }
  try {
    config_from_json({{"colour", 1}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
}

TEST(PipelineConfig, MissingFileIsConfigError) {
  EXPECT_THROW(load_config(fs::temp_directory_path() / "hucd_no_such_config.json"), ConfigError);
}

TEST(PipelineData, MissingMaskNamesPathAndStage) {
  const auto dir = scratch("missing_mask");
  const auto cfg = write_toy_workspace(dir, 6, 1);
  const auto gone = dir / "masks" / "toy0003.json";
  fs::remove(gone);
  std::ostringstream log;
  try {
    cmd_discover(cfg, log);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_EQ(msg.rfind("stage discover/ingest", 0), 0u) << msg;
    EXPECT_NE(msg.find(gone.string()), std::string::npos) << msg;
  }
  fs::remove_all(dir);
}

TEST(PipelineData, LabelsFilteredByClassAndSorted) {
  const auto dir = scratch("labels");
  auto cfg = write_toy_workspace(dir, 8, 1);
  cfg.classes = {1};
  const auto l = read_labels(cfg);
  ASSERT_FALSE(l.empty());
  for (std::size_t i = 0; i < l.size(); ++i) {
    EXPECT_EQ(l[i].class_label, 1);
    if (i) EXPECT_LT(l[i - 1].image_id, l[i].image_id);
  }
  cfg.classes = {7};
  EXPECT_THROW(read_labels(cfg), DataError);
  fs::remove_all(dir);
}

TEST_F(ToyRun, OutputTreeIsReproducibleAcrossParallelism) {
  const auto dir = scratch("repro");
  for (const auto& e : fs::directory_iterator(*dir_))
    if (e.path().filename() != "out") fs::copy(e.path(), dir / e.path().filename(), fs::copy_options::recursive);
  PipelineConfig c = *cfg_;
  c.base = dir;
  c.parallelism = 3;
  std::ostringstream log;
  cmd_all(c, log);
  const auto a = tree(cfg_->resolve(cfg_->output)), b = tree(c.resolve(c.output));
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, bytes] : a) {
    SCOPED_TRACE(name);
    ASSERT_TRUE(b.count(name));
    EXPECT_TRUE(b.at(name) == bytes);
  }
  fs::remove_all(dir);
}

TEST_F(ToyRun, ExplainMapsMatchScoreRows) {
  const auto scores = io::read_csv(cfg_->out("score/scores.csv"));
  const auto ci = scores.column("image_id"), cs = scores.column("segment_id"), cc = scores.column("concept_id"),
             ca = scores.column("activation"), cr = scores.column("relevance");
  for (const auto& id : cfg_->explain) {
    SCOPED_TRACE(id);
    const Matrix act = io::read_matrix(cfg_->out("explain/" + id + "/activation.f32"));
    const Matrix rel = io::read_matrix(cfg_->out("explain/" + id + "/relevance.f32"));
    const auto li = read_labels(*cfg_);
    const auto it = std::find_if(li.begin(), li.end(), [&](const auto& l) { return l.image_id == id; });
    const DatasetItem item = load_item(*cfg_, *it);
    int checked = 0;
    for (const auto& row : scores.rows) {
      if (row[ci] != id) continue;
      const int seg = std::stoi(row[cs]);
      const bool residual = row[cc] == "residual";
      const double a = residual ? 0.0 : std::stod(row[ca]), r = residual ? 0.0 : std::stod(row[cr]);
      for (int y = 0; y < item.map.h; ++y)
        for (int x = 0; x < item.map.w; ++x)
          if (item.map.labels[static_cast<std::size_t>(y) * item.map.w + x] == seg) {
            EXPECT_NEAR(act(y, x), a, 1e-6 * std::max(1.0, std::abs(a)));
            EXPECT_NEAR(rel(y, x), r, 1e-6 * std::max(1.0, std::abs(r)));
            ++checked;
          }
    }
    EXPECT_GT(checked, 0);
    const auto legend = io::read_json(cfg_->out("explain/" + id + "/legend.json"));
    EXPECT_EQ(legend.at("image_id"), id);
    EXPECT_TRUE(fs::exists(cfg_->out("explain/" + id + "/overlay.png")));
  }
}

TEST_F(ToyRun, PrototypeListsHaveTopKEntries) {
  for (int cls : {0, 1}) {
    const auto p = io::read_json(cfg_->out("score/prototypes_" + std::to_string(cls) + ".json"));
    ASSERT_FALSE(p.at("concepts").empty());
    for (const auto& c : p.at("concepts")) {
      EXPECT_FALSE(c.at("truncated").get<bool>());
      const auto& list = c.at("prototypes");
      ASSERT_EQ(list.size(), static_cast<std::size_t>(cfg_->top_k));
      for (std::size_t i = 1; i < list.size(); ++i)
        EXPECT_GE(list[i - 1].at("activation").get<double>(), list[i].at("activation").get<double>());
    }
  }
}

TEST_F(ToyRun, CompletenessAndScoresCoverEverySegment) {
  const auto table = load_segment_table(cfg_->out("discover/segments.csv"), cfg_->out("discover/phi.f32"));
  const auto scores = io::read_csv(cfg_->out("score/scores.csv"));
  EXPECT_EQ(scores.rows.size(), table.rows.size());
  const auto comp = io::read_csv(cfg_->out("score/completeness.csv"));
  for (const auto& row : comp.rows) {
    const double eta = std::stod(row[comp.column("completeness")]);
    EXPECT_GE(eta, 0.0);
    EXPECT_LE(eta, 1.0);
  }
}

TEST_F(ToyRun, DeletionStartsAtBaselineInEveryMode) {
  ASSERT_EQ(bench_->modes.size(), 3u);
  for (const auto& m : bench_->modes) {
    SCOPED_TRACE(to_string(m.mode));
    EXPECT_EQ(m.deletion.excluded.size(), 0u);
    EXPECT_DOUBLE_EQ(m.deletion.accuracy.front(), bench_->baseline);
    EXPECT_DOUBLE_EQ(m.deletion.fraction.front(), 0.0);
    EXPECT_DOUBLE_EQ(m.insertion.fraction.front(), 0.0);
    for (std::size_t t = 1; t < m.deletion.steps(); ++t) EXPECT_GE(m.deletion.fraction[t], m.deletion.fraction[t - 1]);
  }
}

TEST_F(ToyRun, EveryModeWritesLabeledCurves) {
  const auto auc = io::read_csv(cfg_->out("bench/auc.csv"));
  EXPECT_EQ(auc.rows.size(), 6u);
  for (const auto& m : cfg_->bench_modes) {
    const std::string dir = std::string("bench/") + to_string(m);
    const auto csv = io::read_csv(cfg_->out(dir + "/curves.csv"));
    std::set<std::string> dirs;
    for (const auto& r : csv.rows) dirs.insert(r[csv.column("direction")]);
    EXPECT_EQ(dirs, (std::set<std::string>{"deletion", "insertion"}));
    const auto tr = io::read_json(cfg_->out(dir + "/traces.json"));
    EXPECT_TRUE(tr.contains("deletion") && tr.contains("insertion"));
  }
}

TEST_F(ToyRun, BenchMainModeMatchesInMemoryCurve) {
  // Re-embedding the main mode must give the same plans as the stored table.
  const ModelGraph g = load_pipeline_model(*cfg_);
  const auto items = load_dataset(*cfg_);
  std::vector<FlipPlan> plans;
  for (const auto& it : items)
    plans.push_back(build_flip_plan(g, it, load_space(space_stem(*cfg_, it.class_label)), class_head(g, it.class_label),
                                    cfg_->masking()));
  const auto del = c_deletion(g, items, plans, bench_->concepts, cfg_->masking());
  EXPECT_EQ(del.accuracy, bench_->modes.front().deletion.accuracy);
}
