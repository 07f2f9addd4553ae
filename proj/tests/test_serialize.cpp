#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "sgsr/config.hpp"
#include "sgsr/generator.hpp"
#include "sgsr/serialize.hpp"

using namespace sgsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sgsr_tests_serialize";
  fs::create_directories(dir);
  return dir / name;
}

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Container, RoundTrip) {
  Container c;
  c.add("a", "hello");
  c.add("empty", "");
  c.add("bin", std::string("\0\1\2\xff", 4));
  const Container d = Container::decode(c.encode());
  ASSERT_EQ(d.sections().size(), 3u);
  EXPECT_EQ(d.get("a"), "hello");
  EXPECT_EQ(d.get("empty"), "");
  EXPECT_EQ(d.get("bin"), std::string("\0\1\2\xff", 4));
  EXPECT_EQ(d.encode(), c.encode());
  EXPECT_THROW(d.get("missing"), std::runtime_error);
  EXPECT_THROW(c.add("a", "again"), std::logic_error);
}

TEST(Container, FileRoundTrip) {
  Container c;
  c.add("x", std::string(1000, 'q'));
  const fs::path p = scratch("c.ckpt");
  save_container(c, p);
  EXPECT_EQ(load_container(p).get("x"), std::string(1000, 'q'));
  EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST(Container, CorruptionDetected) {
  Container c;
  c.add("payload", "0123456789");
  std::string bytes = c.encode();
  bytes[20] ^= 1;
  const std::string msg = what_of([&] { Container::decode(bytes); });
  EXPECT_NE(msg.find("checksum mismatch"), std::string::npos);
  EXPECT_NE(msg.find("version 1"), std::string::npos);
}

TEST(Container, WrongVersionAndMagic) {
  Container c;
  std::string bytes = c.encode();
  bytes[8] = 7;
  EXPECT_NE(what_of([&] { Container::decode(bytes); }).find("unsupported container version 7"), std::string::npos);
  EXPECT_NE(what_of([] { Container::decode("not a checkpoint at all, clearly not one"); }).find("not an sgsr"),
            std::string::npos);
  EXPECT_THROW(Container::decode(""), std::runtime_error);
}

TEST(Params, RoundTripBitExact) {
  Generator<float> a(GeneratorConfig::tiny(), 1), b(GeneratorConfig::tiny(), 2);
  decode_params(encode_params(a.params()), b.params(), "generator");
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  for (size_t i = 0; i < ea.size(); ++i) EXPECT_TRUE(std::equal(ea[i].tensor.data().begin(), ea[i].tensor.data().end(), eb[i].tensor.data().begin()))
        << ea[i].name;
}

TEST(Params, ShapeMismatchNamesTensor) {
  GeneratorConfig wide = GeneratorConfig::tiny();
  wide.base_channels = 20;
  Generator<float> a(GeneratorConfig::tiny(), 1), b(wide, 1);
  const std::string msg = what_of([&] { decode_params(encode_params(a.params()), b.params(), "generator"); });
  EXPECT_NE(msg.find("generator"), std::string::npos);
  EXPECT_NE(msg.find("does not match"), std::string::npos);
}

TEST(Vectors, RoundTrip) {
  const std::vector<std::vector<float>> v{{1.5f, -2.0f}, {}, {3.0f}};
  EXPECT_EQ(decode_vectors(encode_vectors(v)), v);
}

TEST(KeyValue, RoundTripAndRejectsSeparators) {
  const std::vector<std::pair<std::string, std::string>> kv{{"phase", "gan"}, {"step", "12"}, {"empty", ""}};
  EXPECT_EQ(decode_kv(encode_kv(kv)), kv);
  EXPECT_THROW(encode_kv({{"a=b", "c"}}), std::invalid_argument);
  EXPECT_THROW(decode_kv("no separator here\n"), std::runtime_error);
}

// --- config ----------------------------------------------------------------

TEST(Config, PresetThenOverrides) {
  const RunConfig c = parse_config("# comment\ng.base_channels = 12   # trailing\npreset = desk\n\ntrain.seed = 9\n");
  EXPECT_EQ(c.preset, "desk");
  EXPECT_EQ(c.g.base_channels, 12);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.batch_size, make_preset("desk").train.batch_size);
}

TEST(Config, DefaultPresetIsTiny) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.g.n_rrdb_sr, 2);
  EXPECT_EQ(c.g.n_rrdb_gb, 1);
}

TEST(Config, PaperPresetValues) {
  const RunConfig c = make_preset("paper");
  EXPECT_EQ(c.g.n_rrdb_sr, 23);
  EXPECT_EQ(c.g.n_rrdb_gb, 4);
  EXPECT_EQ(c.g.tap_indices, (std::vector<int>{5, 10, 15, 20}));
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_EQ(c.train.pretrain_lr, 2e-4);
  EXPECT_EQ(c.train.gan_lr, 1e-4);
  EXPECT_EQ(c.train.lr_milestones, (std::vector<int64_t>{50000, 100000, 200000, 300000}));
  EXPECT_EQ(c.train.lr_min, 1e-7);
  EXPECT_EQ(c.loss.lambda_per, 0.001);
  EXPECT_EQ(c.loss.lambda_fm, 1.0);
  EXPECT_EQ(c.loss.lambda_adv, 0.005);
  EXPECT_EQ(c.loss.lambda_pix, 0.01);
  EXPECT_EQ(c.loss.lambda_gm, 0.01);
  EXPECT_EQ(c.loss.lambda_gb, 0.5);
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_NE(what_of([] { parse_config("train.seed = 1\nbogus.key = 3\n"); }).find("line 2: unknown key 'bogus.key'"),
            std::string::npos);
  EXPECT_NE(what_of([] { parse_config("\n\ng.base_channels = lots\n"); }).find("line 3"), std::string::npos);
  EXPECT_NE(what_of([] { parse_config("just words\n"); }).find("line 1"), std::string::npos);
  EXPECT_THROW(parse_config("preset = huge\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("train.lr_milestones = 5,3\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("train.gan_lr = 0\n"), std::invalid_argument);
}

TEST(Config, EveryKeyIsDocumentedAndAccepted) {
  ASSERT_FALSE(config_keys().empty());
  for (const auto& k : config_keys()) {
    EXPECT_FALSE(k.help.empty()) << k.key;
    const std::string msg = what_of([&] { parse_config(k.key + " = @@\n"); });
    EXPECT_EQ(msg.find("unknown key"), std::string::npos) << k.key;
  }
}
