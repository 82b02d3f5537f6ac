/*
 * Copyright 2026 The dtbks Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "dtbks/data.hpp"
#include "dtbks/errors.hpp"
#include "dtbks/numerics/rng.hpp"

namespace dtbks {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("dtbks_data_" + std::to_string(::getpid()))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path write(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name) << content;
    return path_ / name;
  }

 private:
  fs::path path_;
};

const fs::path kDataDir = DTBKS_DATA_DIR;

Dataset toy_regression(std::size_t n, std::size_t d, std::uint64_t seed) {
  RngStream rng(seed);
  Dataset ds;
  ds.features = Tensor({n, d});
  ds.targets = Tensor({n, 1});
  for (double& v : ds.features.data()) v = 3.0 + 2.0 * rng.normal();
  for (double& v : ds.targets.data()) v = 10.0 + rng.normal();
  for (std::size_t c = 0; c < d; ++c) ds.feature_names.push_back("x" + std::to_string(c));
  ds.target_names = {"y"};
  return ds;
}

Dataset toy_classification(std::size_t n, std::size_t positives) {
  Dataset ds;
  ds.task = TaskKind::kClassification;
  ds.features = Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    ds.features[i] = static_cast<double>(i);
    ds.labels.push_back(i < positives ? 1 : 0);
  }
  ds.class_names = {"neg", "pos"};
  return ds;
}

TEST(LoadCsvTest, ToyWithHeader) {
  TempDir dir;
  const auto path = dir.write("toy.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
  const Dataset ds = load_csv(path, {"y", TaskKind::kRegression, {}});
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.num_features(), 2u);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(ds.features.at(2, 1), 8.0);
  EXPECT_DOUBLE_EQ(ds.targets.at(1, 0), 6.0);
}

TEST(LoadCsvTest, TargetInMiddleWithoutHeader) {
  TempDir dir;
  const auto path = dir.write("toy.csv", "1,2,3\n4,5,6\n");
  const Dataset ds = load_csv(path, {"1", TaskKind::kRegression, {}});
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_DOUBLE_EQ(ds.features.at(1, 1), 6.0);
  EXPECT_DOUBLE_EQ(ds.targets.at(1, 0), 5.0);
}

TEST(LoadCsvTest, ErrorsNameTheRow) {
  TempDir dir;
  std::string content = "a,b,y\n";
  for (int r = 1; r <= 9; ++r) content += r == 7 ? "1,oops,0\n" : "1,2,0\n";
  const auto bad = dir.write("bad.csv", content);
  try {
    load_csv(bad, {"y", TaskKind::kRegression, {}});
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos) << e.what();
  }
  const auto ragged = dir.write("ragged.csv", "a,y\n1,2\n3\n");
  EXPECT_THROW(load_csv(ragged, {"y", TaskKind::kRegression, {}}), IngestionError);
  EXPECT_THROW(load_csv(dir.write("ok.csv", "a,y\n1,2\n"), {"z", TaskKind::kRegression, {}}),
               IngestionError);
  EXPECT_THROW(load_csv(dir.write("none.csv", ""), {"y", TaskKind::kRegression, {}}), IngestionError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv", {"y", TaskKind::kRegression, {}}), IngestionError);
}

TEST(LoadCsvTest, ClassLabelsAreContiguous) {
  TempDir dir;
  const auto path = dir.write("cls.csv", "x,label\n0,10\n1,2\n2,10\n3,7\n");
  const Dataset ds = load_csv(path, {"label", TaskKind::kClassification, {}});
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"2", "7", "10"}));
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{2, 0, 2, 1}));
  const Dataset mapped =
      load_csv(dir.write("mb.csv", "x,d\n1,M\n2,B\n"), {"d", TaskKind::kClassification, {{"M", 1}, {"B", 0}}});
  EXPECT_EQ(mapped.labels, (std::vector<std::size_t>{1, 0}));
  EXPECT_THROW(load_csv(dir.write("mx.csv", "x,d\n1,M\n2,X\n"),
                        {"d", TaskKind::kClassification, {{"M", 1}, {"B", 0}}}),
               IngestionError);
}

TEST(LoadCsvTest, BundledDatasets) {
  const Dataset wdbc = load_csv(kDataDir / "wdbc.csv", load_schema(kDataDir / "wdbc.schema.json"));
  EXPECT_EQ(wdbc.size(), 569u);
  EXPECT_EQ(wdbc.num_features(), 30u);
  EXPECT_EQ(wdbc.num_classes(), 2u);
  const Dataset boston =
      load_csv(kDataDir / "boston_housing.csv", load_schema(kDataDir / "boston_housing.schema.json"));
  EXPECT_EQ(boston.size(), 506u);
  EXPECT_EQ(boston.num_features(), 13u);
  const Dataset wine = load_csv(kDataDir / "winequality_red.csv",
                                load_schema(kDataDir / "winequality_red.schema.json"));
  EXPECT_EQ(wine.size(), 1599u);
  EXPECT_EQ(wine.num_features(), 11u);
}

TEST(SchemaTest, UnknownKeysRejected) {
  TempDir dir;
  EXPECT_THROW(load_schema(dir.write("s.json", R"({"target_column": "y", "taks": "regression"})")),
               ConfigError);
  EXPECT_THROW(load_schema(dir.write("t.json", R"({"target_column": "y", "task": "ranking"})")),
               ConfigError);
  EXPECT_THROW(load_schema(dir.write("u.json", R"({"task": "regression"})")), ConfigError);
}

TEST(StandardizerTest, RoundTripsTrainingData) {
  const Dataset ds = toy_regression(50, 4, 1);
  const Standardizer s = Standardizer::fit(ds);
  const Dataset z = s.transform(ds);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 50; ++r) m += z.features.at(r, c) / 50.0;
    for (std::size_t r = 0; r < 50; ++r) v += z.features.at(r, c) * z.features.at(r, c) / 50.0;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-12);
  }
  const Tensor back = s.inverse_features(z.features);
  const Tensor yback = s.inverse_targets(z.targets);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], ds.features[i], 1e-12);
  for (std::size_t i = 0; i < yback.size(); ++i) EXPECT_NEAR(yback[i], ds.targets[i], 1e-12);
}

TEST(StandardizerTest, DropsConstantColumns) {
  Dataset ds = toy_regression(20, 3, 2);
  for (std::size_t r = 0; r < 20; ++r) ds.features.at(r, 1) = 4.0;
  const Standardizer s = Standardizer::fit(ds);
  EXPECT_EQ(s.kept_columns(), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(s.dropped_columns(), (std::vector<std::size_t>{1}));
  const Dataset z = s.transform(ds);
  EXPECT_EQ(z.num_features(), 2u);
  EXPECT_EQ(z.feature_names, (std::vector<std::string>{"x0", "x2"}));
}

TEST(StandardizerTest, NeverReadsTestStatistics) {
  const Dataset train = toy_regression(40, 2, 3);
  Dataset shifted = toy_regression(40, 2, 4);
  for (double& v : shifted.features.data()) v = 100.0 + 50.0 * v;
  const Standardizer s = Standardizer::fit(train);
  const Standardizer before = s;
  const Dataset z = s.transform(shifted);
  EXPECT_EQ(s, before);
  EXPECT_NEAR(z.features.at(0, 0),
              (shifted.features.at(0, 0) - s.feature_mean()[0]) / s.feature_std()[0], 1e-12);
}

TEST(SplitTest, Examples) {
  const Dataset ds = toy_regression(10, 2, 5);
  const SplitSpec spec{0.9, 3, 42};
  const Split a = split(ds, spec, 1);
  EXPECT_EQ(a.train.size(), 9u);
  EXPECT_EQ(a.test.size(), 1u);
  const Split b = split(ds, spec, 1);
  EXPECT_EQ(a.train_rows, b.train_rows);
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_NE(split(ds, spec, 2).hash, a.hash);
  std::vector<std::size_t> all = a.train_rows;
  all.insert(all.end(), a.test_rows.begin(), a.test_rows.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(10);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
  EXPECT_THROW(split(ds, spec, 3), UsageError);
}

TEST(SplitTest, Stratified) {
  const Dataset ds = toy_classification(100, 37);
  for (std::size_t rep = 0; rep < 10; ++rep) {
    const Split s = split(ds, {0.9, 10, 7}, rep);
    ASSERT_EQ(s.train.size(), 90u);
    const double pos = static_cast<double>(std::count(s.train.labels.begin(), s.train.labels.end(), 1u));
    EXPECT_LE(std::abs(pos - 0.37 * 90.0), 1.0);
  }
}

TEST(SplitTest, DegenerateSplitsRejected) {
  EXPECT_THROW(split(toy_regression(3, 1, 1), {0.9, 1, 0}, 0), SplitError);
  EXPECT_THROW(split(toy_classification(40, 1), {0.5, 1, 0}, 0), SplitError);
  EXPECT_THROW(split(toy_regression(10, 1, 1), {1.0, 1, 0}, 0), ConfigError);
}

TEST(MetricsTest, Rmse) {
  const Tensor t({3, 1}, {1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(rmse(t, t), 0.0);
  EXPECT_DOUBLE_EQ(rmse(Tensor({3, 1}, {3.0, 4.0, 5.0}), t), 2.0);
  EXPECT_NEAR(rmse(Tensor({1, 2}, {0.0, 0.0}), Tensor({1, 2}, {3.0, 4.0})), 3.5355339, 1e-7);
  EXPECT_THROW(rmse(Tensor({2, 1}), t), UsageError);
}

TEST(MetricsTest, Misclassification) {
  const std::vector<std::size_t> y = {0, 1, 1, 0, 2, 2, 1, 0};
  EXPECT_DOUBLE_EQ(misclassification_rate(y, y), 0.0);
  std::vector<std::size_t> flipped = y;
  for (auto& v : flipped) v = (v + 1) % 3;
  EXPECT_DOUBLE_EQ(misclassification_rate(flipped, y), 1.0);
  std::vector<std::size_t> one = y;
  one[3] = 1;
  EXPECT_DOUBLE_EQ(misclassification_rate(one, y), 0.125);
  EXPECT_THROW(misclassification_rate(std::vector<std::size_t>{1}, y), UsageError);
}

TEST(MetricsTest, OrderInvariant) {
  RngStream rng(9);
  Tensor p({30, 1}), t({30, 1});
  std::vector<std::size_t> lp(30), lt(30);
  for (std::size_t i = 0; i < 30; ++i) {
    p[i] = rng.normal();
    t[i] = rng.normal();
    lp[i] = rng.below(3);
    lt[i] = rng.below(3);
  }
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 30; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  Tensor pp({30, 1}), tp({30, 1});
  std::vector<std::size_t> lpp(30), ltp(30);
  for (std::size_t i = 0; i < 30; ++i) {
    pp[i] = p[perm[i]];
    tp[i] = t[perm[i]];
    lpp[i] = lp[perm[i]];
    ltp[i] = lt[perm[i]];
  }
  EXPECT_NEAR(rmse(p, t), rmse(pp, tp), 1e-14);
  EXPECT_DOUBLE_EQ(misclassification_rate(lp, lt), misclassification_rate(lpp, ltp));
}

}  // namespace
}  // namespace dtbks
