#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "basinlab/checkpoint_io.hpp"
#include "basinlab/config.hpp"
#include "basinlab/emit.hpp"
#include "basinlab/errors.hpp"
#include "basinlab/landscape.hpp"
#include "doctest.h"

using namespace basinlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "basinlab-tests";
  fs::create_directories(dir);
  return dir / name;
}

void put_be32(std::string& s, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

// count images of rows x cols with pixel (i, j) = (i + j) % 256
std::string idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, std::uint32_t magic = 0x803) {
  std::string s;
  put_be32(s, magic);
  put_be32(s, count);
  put_be32(s, rows);
  put_be32(s, cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < rows * cols; ++j) s.push_back(static_cast<char>((i + j) % 256));
  }
  return s;
}

std::string idx_labels(std::uint32_t count, std::uint32_t magic = 0x801) {
  std::string s;
  put_be32(s, magic);
  put_be32(s, count);
  for (std::uint32_t i = 0; i < count; ++i) s.push_back(static_cast<char>(i % 10));
  return s;
}

Checkpoint sample_checkpoint(const ModelSpec& spec = ModelSpec{{6, 4, 3}, {true}, 0.0}) {
  const Model m(spec);
  Checkpoint c;
  c.params = m.initialize(InitScheme::xavier(), rng::SeedPlan{3, {}}.key(rng::Stream::init));
  c.bn = m.initial_bn_stats();
  for (auto& l : c.bn.layers) {
    for (std::size_t i = 0; i < l.mean.size(); ++i) {
      l.mean[i] = 0.1 * i - 1.0 / 3.0;
      l.var[i] = 1.0 + std::sqrt(2.0) * i;
    }
  }
  c.model = spec;
  c.optimizer = "adam";
  c.epoch = 7;
  c.master_seed = 12345678901234567ull;
  c.run_hash = "00ff";
  c.eval_loss = 0.1234567890123;
  c.eval_accuracy = 0.75;
  return c;
}

}  // namespace

TEST_CASE("mnist: IDX parsing") {
  const auto img = scratch("img.idx"), lab = scratch("lab.idx");
  write_file(img, idx_images(5, 28, 28));
  write_file(lab, idx_labels(5));
  const auto d = load_mnist(img, lab);
  CHECK(d.size() == 5);
  CHECK(d.dim() == 784);
  CHECK(d.classes == 10);
  CHECK(d.inputs(1, 2) == 3.0 / 255.0);
  CHECK(d.labels[4] == 4);
  const auto head = load_mnist(img, lab, 3);
  CHECK(head.size() == 3);
  CHECK(load_mnist(img, lab, 3).inputs.storage() == head.inputs.storage());

  SUBCASE("bad magic names the offset") {
    write_file(img, idx_images(5, 28, 28, 0x804));
    try {
      (void)load_mnist(img, lab);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
  }
  SUBCASE("truncated image file") {
    auto bytes = idx_images(5, 28, 28);
    bytes.resize(bytes.size() - 10);
    write_file(img, bytes);
    CHECK_THROWS_AS(load_mnist(img, lab), FormatError);
  }
  SUBCASE("count mismatch") {
    write_file(lab, idx_labels(4));
    CHECK_THROWS_AS(load_mnist(img, lab), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_mnist(scratch("nope"), lab), FormatError); }
}

TEST_CASE("synthetic blobs") {
  SynthSpec s;
  s.classes = 2;
  s.per_class = 100;
  s.dim = 2;
  s.scale = 3.0;
  s.sigma = 0.1;
  const auto key = rng::SeedPlan{4, {}}.key(rng::Stream::data_synth);
  const auto d = synth_dataset(s, key);
  CHECK(d.size() == 200);
  CHECK(synth_dataset(s, key).inputs.storage() == d.inputs.storage());
  // class c sits near 3 e_c, so the linear rule argmax(x) is perfect
  std::size_t right = 0;
  for (std::size_t i = 0; i < d.size(); ++i) right += (d.inputs(i, 0) > d.inputs(i, 1)) == (d.labels[i] == 0);
  CHECK(right == d.size());

  s.per_class = 0;
  CHECK(synth_dataset(s, key).empty());
  s.dim = 1;
  CHECK_THROWS_AS(synth_dataset(s, key), InvalidArgument);

  SynthSpec u;
  u.per_class = 5;
  u.unit_range = true;
  const auto ud = synth_dataset(u, key);
  for (double v : ud.inputs.storage()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("synthetic blobs: a linear model separates two classes") {
  SynthSpec s;
  s.classes = 2;
  s.per_class = 50;
  s.dim = 2;
  s.scale = 3.0;
  s.sigma = 0.2;
  const auto d = synth_dataset(s, rng::SeedPlan{9, {}}.key(rng::Stream::data_synth));
  const Model m(ModelSpec{{2, 2}, {}, 0.0});
  auto p = m.zero_parameters();
  auto stats = m.initial_bn_stats();
  for (int it = 0; it < 200; ++it) {
    const auto lg = m.loss_and_grad(p, stats, d.inputs, d.labels, Mode::train);
    for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] -= 0.5 * lg.grad.grad[i];
  }
  CHECK(landscape::evaluate(m, p, stats, d).accuracy == 1.0);
}

TEST_CASE("checkpoint: round trip is bitwise") {
  const auto c = sample_checkpoint();
  const auto path = scratch("a.ckpt");
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  CHECK(back.params.bitwise_equal(c.params));
  CHECK(back.bn == c.bn);
  CHECK(back.model == c.model);
  CHECK(back.optimizer == "adam");
  CHECK(back.epoch == 7);
  CHECK(back.master_seed == c.master_seed);
  CHECK(back.eval_loss == c.eval_loss);
  CHECK(back.config_hash() == c.config_hash());

  // saving the loaded copy reproduces the file byte for byte
  save_checkpoint(back, scratch("b.ckpt"));
  std::ifstream a(path, std::ios::binary), b(scratch("b.ckpt"), std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("checkpoint: non-finite eval loss survives") {
  auto c = sample_checkpoint();
  c.eval_loss = INFINITY;
  std::stringstream ss;
  write_checkpoint(ss, c);
  CHECK(std::isinf(read_checkpoint(ss).eval_loss));
}

TEST_CASE("checkpoint: tampering is detected") {
  const auto c = sample_checkpoint();
  std::stringstream ss;
  write_checkpoint(ss, c);
  const std::string good = ss.str();
  const auto payload = good.find("LSCHKPT1");
  REQUIRE(payload != std::string::npos);

  SUBCASE("length field") {
    auto bad = good;
    bad[payload + 8] = static_cast<char>(bad[payload + 8] + 1);
    std::stringstream in(bad);
    try {
      (void)read_checkpoint(in);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("length") != std::string::npos);
    }
  }
  SUBCASE("magic") {
    auto bad = good;
    bad[payload] = 'X';
    std::stringstream in(bad);
    CHECK_THROWS_AS(read_checkpoint(in), FormatError);
  }
  SUBCASE("truncated payload") {
    std::stringstream in(good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(read_checkpoint(in), FormatError);
  }
  SUBCASE("different model spec") {
    std::stringstream in(good);
    const auto other = ModelSpec{{6, 4, 3}, {false}, 0.0};
    CHECK_THROWS_AS(read_checkpoint(in, &other), IncompatibleError);
  }
  SUBCASE("hash in header disagrees with the spec") {
    auto bad = good;
    const auto h = bad.find(c.config_hash());
    bad[h] = bad[h] == '0' ? '1' : '0';
    std::stringstream in(bad);
    CHECK_THROWS_AS(read_checkpoint(in), IncompatibleError);
  }
}

TEST_CASE("run config: canonical form and hash") {
  RunConfig c;
  c.schedule = optim::SwitchSchedule::switch_at(optim::OptimizerSpec::defaults(optim::Kind::adam), 10,
                                                optim::OptimizerSpec::defaults(optim::Kind::sgd));
  c.seed_overrides[rng::Stream::dropout] = 77;
  const auto text = c.canonical();
  CHECK(text.find('\n') == std::string::npos);
  CHECK(text.find(": ") == std::string::npos);
  const auto back = run_config_from_json(nlohmann::json::parse(text));
  CHECK(back.canonical() == text);
  CHECK(back.hash() == c.hash());
  CHECK(c.hash().size() == 16);

  auto d = c;
  d.batch_size = 64;
  CHECK(d.hash() != c.hash());

  const auto path = scratch("config.json");
  save_run_config(c, path);
  CHECK(load_run_config(path).hash() == c.hash());

  // whitespace in the file does not matter
  const auto j = nlohmann::json::parse(text);
  CHECK(run_config_from_json(nlohmann::json::parse(j.dump(4))).hash() == c.hash());

  auto bad = nlohmann::json::parse(text);
  bad["total_epochs"] = 12;
  CHECK_NOTHROW(run_config_from_json(bad).validate());
  bad["total_epochs"] = 10;
  CHECK_THROWS_AS(run_config_from_json(bad).validate(), InvalidArgument);
}

TEST_CASE("emit: surface rows") {
  std::vector<landscape::SurfaceSample> s(101);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i].alpha = i / 100.0;
    s[i].train_loss = 0.5;
    s[i].train_accuracy = 1.0;
  }
  s[50].train_loss = INFINITY;
  s[50].diverged = true;
  std::ostringstream out;
  write_surface(out, s);
  const auto text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 102);
  CHECK(text.rfind("alpha,beta,train_loss,train_acc,test_loss,test_acc\n", 0) == 0);
  CHECK(text.find("\n0.5,,inf,1,,\n") != std::string::npos);
  CHECK(text.find("\n0,,0.5,1,,\n") != std::string::npos);

  landscape::SurfaceSample two;
  two.alpha = 0.25;
  two.beta = 0.75;
  two.train_loss = 1.0 / 3.0;
  two.train_accuracy = 0.5;
  two.test_loss = 2.0;
  two.test_accuracy = 0.25;
  std::ostringstream o2;
  write_surface(o2, std::span(&two, 1));
  CHECK(o2.str().find("0.25,0.75,0.3333333333333333,0.5,2,0.25\n") != std::string::npos);
}

TEST_CASE("emit: series and report") {
  std::vector<EpochRecord> r(1);
  r[0] = {3, "A10-S10", 0.25, 0.5, {}, 0.125, 1.5, 2.5};
  std::ostringstream out;
  write_series(out, r);
  CHECK(out.str() ==
        "epoch,train_loss,train_acc,test_acc,dist_from_init,weight_norm,optimizer\n3,0.25,0.5,0.125,1.5,2.5,A10-S10\n");

  analysis::ComparisonReport rep;
  rep.path_id = "sgd__adam";
  rep.functional_distance = 0.5;
  rep.disagreement_rate = 0.25;
  rep.bump_height = 1.0;
  rep.endpoint_losses = {0.1, 0.2};
  std::ostringstream o2;
  write_report(o2, std::span(&rep, 1));
  const auto j = nlohmann::json::parse(o2.str());
  CHECK(j[0]["path_id"] == "sgd__adam");
  CHECK(j[0]["bump_height"] == 1.0);
  CHECK(j[0]["endpoint_losses"][1] == 0.2);
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-INFINITY) == "-inf");
}
