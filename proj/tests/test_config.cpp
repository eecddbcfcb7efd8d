#include <doctest.h>

#include "bfg/config.hpp"
#include "bfg/errors.hpp"

using namespace bfg;

TEST_CASE("config text sets keys and rejects unknown ones") {
  RunConfig cfg;
  apply_config_text(cfg,
                    "# comment\n"
                    "data.scenes = 3\n"
                    "  bfg.lambda=0.5  \n"
                    "bfg.measure2 = l2norm\n"
                    "embedder.head_widths = 16, 8\n"
                    "trainer.split = s1\n"
                    "bfg.variant = spgen\n",
                    "cfg");
  CHECK(cfg.data.scenes == 3);
  CHECK(cfg.model.globalization.lambda == 0.5);
  CHECK(cfg.model.globalization.measure2 == Measure::L2Norm);
  CHECK(cfg.model.embedder.feature_dim() == 8);
  CHECK(cfg.trainer.fold == Fold::S1);
  CHECK(cfg.model.variant == Variant::SpGen);

  try {
    apply_config_text(cfg, "data.scenes = 2\nbfg.gamma = 1\n", "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("run.cfg:2") != std::string::npos);
    CHECK(msg.find("bfg.gamma") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(cfg, "data.scenes\n", "x"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "data.scenes=-1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "bfg.xi=abc"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "bfg.ip_sign=maybe"), ConfigError);
}

TEST_CASE("snapshot round trips every key") {
  RunConfig cfg;
  apply_override(cfg, "bfg.xi=0.3");
  apply_override(cfg, "trainer.lr_rest=0.0003");
  apply_override(cfg, "trainer.rotate=false");
  RunConfig back;
  apply_config_text(back, cfg.snapshot(), "snapshot");
  CHECK(back.snapshot() == cfg.snapshot());
  CHECK(back.model.globalization.xi == 0.3);
  CHECK_FALSE(back.trainer.episode.rotate);
}

TEST_CASE("help table lists every key with its default") {
  const std::string help = config_help_table();
  const RunConfig defaults;
  for (const auto& k : config_keys()) {
    const auto pos = help.find(k.name + " ");
    REQUIRE(pos != std::string::npos);
    const auto line_end = help.find('\n', pos);
    CHECK(help.substr(pos, line_end - pos).find("= " + defaults.get(k.name)) != std::string::npos);
  }
  CHECK(config_keys().size() >= 40);
}

TEST_CASE("validation catches bad values") {
  RunConfig cfg;
  cfg.validate();
  apply_override(cfg, "eval.episodes=0");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  RunConfig widths;
  apply_override(widths, "embedder.input_channels=5");
  CHECK_THROWS_AS(widths.validate(), ConfigError);
}
