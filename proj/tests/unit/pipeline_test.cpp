#include "postasr/pipeline.hpp"
#include "postasr/fixture.hpp"
#include "postasr/refine.hpp"
#include "postasr/wer.hpp"

#include "test_util.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace postasr;
using postasr::testing::fixture;
using postasr::testing::golden;
using postasr::testing::read_all;
using postasr::testing::run_cli;
using postasr::testing::temp_dir;
using postasr::testing::write_all;

namespace {

class failing_annotator final : public annotator {
  public:
    completion complete(const completion_request &request) override { throw exhausted_error("no luck", fingerprint(request)); }
};

corpus fixture_corpus(const std::uint64_t seed, const std::size_t records) {
    fixture_config cfg;
    cfg.seed = seed;
    cfg.records = records;
    return generate_fixture(cfg);
}

}  // namespace

TEST(Experiments, ParseWithDefaults) {
    const nlohmann::json doc = nlohmann::json::parse(R"({
        "version": 1,
        "defaults": {"context_mode": "script", "model": "gpt-4"},
        "experiments": [
            {"name": "a", "text_source": "ensemble", "context_length": 10},
            {"name": "b", "prompt": "cot", "context_mode": "session", "backend": "mock"}
        ]})");
    const auto specs = parse_experiments(doc, default_templates());
    ASSERT_EQ(specs.size(), 2u);
    EXPECT_EQ(specs[0].text_source, "ensemble");
    EXPECT_EQ(specs[0].context_length, 10u);
    EXPECT_EQ(specs[0].mode, context_mode::script);
    EXPECT_EQ(specs[0].model, "gpt-4");
    EXPECT_EQ(specs[0].prompt, "baseline");
    EXPECT_EQ(specs[1].mode, context_mode::session);
    EXPECT_EQ(specs[1].backend, backend_kind::mock);
    EXPECT_EQ(specs[1].context_length, 3u);
    EXPECT_EQ(to_json(specs[1])["prompt"], "cot");
}

TEST(Experiments, Rejections) {
    const auto bad = [](const std::string &text) {
        EXPECT_THROW(parse_experiments(nlohmann::json::parse(text), default_templates()), config_error) << text;
    };
    bad(R"({"experiments": [{"name": "a"}, {"name": "a"}]})");
    bad(R"({"experiments": [{"text_source": "whispertiny"}]})");
    bad(R"({"experiments": [{"name": "a", "prompt": "shouty"}]})");
    bad(R"({"experiments": [{"name": "a", "text_source": "groundtruth"}]})");
    bad(R"({"experiments": [{"name": "a", "context_length": 0}]})");
    bad(R"({"experiments": [{"name": "a", "context_length": "three"}]})");
    bad(R"({"experiments": [{"name": "a", "colour": "blue"}]})");
    bad(R"({"experiments": [{"name": "a", "context_mode": "dialogue"}]})");
    bad(R"({"experiments": {"name": "a"}})");
    bad(R"([])");
}

TEST(Experiments, ShippedMatrixConfig) {
    const auto specs = load_experiments(std::filesystem::path{ POSTASR_SOURCE_DIR } / "configs" / "experiments.json", default_templates());
    ASSERT_EQ(specs.size(), 13u);
    EXPECT_EQ(specs[0].text_source, "whispertiny");
    EXPECT_EQ(specs[12].model, "gpt-4");
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(specs[i].model, "gpt-3.5-turbo");
    }
}

TEST(PredictionRequest, WorkedExamplePrompt) {
    const corpus c = load_corpus(fixture("worked_example.json"), true);
    experiment_spec spec;
    spec.mode = context_mode::script;
    spec.context_length = 3;
    spec.text_source = "whispertiny";
    std::size_t fallbacks = 99;
    const completion_request req = make_prediction_request(c, 22, spec, default_templates(), &fallbacks);
    EXPECT_EQ(req.prompt, read_all(golden("baseline.txt")));
    EXPECT_EQ(req.max_tokens, prediction_max_tokens);
    EXPECT_EQ(req.temperature, 0.0);
    EXPECT_EQ(req.model, "gpt-3.5-turbo");
    EXPECT_EQ(fallbacks, 0u);
}

TEST(RunExperiment, PredictsFlaggedRecordsAndScores) {
    const corpus c = fixture_corpus(3, 80);
    mock_backend mock{ 1 };
    experiment_spec spec;
    spec.name = "t";
    const run_result r = run_experiment(c, spec, default_templates(), mock);
    std::size_t flagged = 0;
    for (const auto &rec : c.records()) {
        flagged += rec.need_prediction ? 1 : 0;
    }
    EXPECT_EQ(r.predictions.size(), flagged);
    EXPECT_TRUE(r.failures.empty());
    ASSERT_TRUE(r.evaluation.has_value());
    EXPECT_EQ(r.evaluation->n_scored, flagged);
    EXPECT_EQ(r.fallback_count, 0u);

    // prediction equals the mock label of the fingerprint of the request the pipeline would build
    std::size_t k = 0;
    for (std::size_t pos = 0; pos < c.size(); ++pos) {
        if (!c[pos].need_prediction) {
            continue;
        }
        const prediction &p = r.predictions[k++];
        EXPECT_EQ(p.id, c[pos].id.raw);
        const std::string fp = fingerprint(make_prediction_request(c, pos, spec, default_templates()));
        EXPECT_EQ(p.fingerprint, fp);
        EXPECT_EQ(p.label, mock_backend::label_for(1, fp));
    }
}

TEST(RunExperiment, DeterministicAcrossConcurrency) {
    const corpus c = fixture_corpus(4, 60);
    mock_backend mock{ 2 };
    experiment_spec spec;
    spec.name = "t";
    const run_result serial = run_experiment(c, spec, default_templates(), mock, { 1, ua_definition::macro_recall });
    const run_result wide = run_experiment(c, spec, default_templates(), mock, { 16, ua_definition::macro_recall });
    EXPECT_EQ(predictions_json(serial).dump(), predictions_json(wide).dump());
    EXPECT_EQ(to_json(*serial.evaluation).dump(), to_json(*wide.evaluation).dump());
}

TEST(RunExperiment, UnparseableResponsesFallBackToNeutral) {
    const corpus c = load_corpus(fixture("worked_example.json"), true);
    experiment_spec spec;
    spec.name = "t";
    std::map<std::string, std::string> scripted;
    for (std::size_t pos = 0; pos < c.size(); ++pos) {
        if (c[pos].need_prediction) {
            scripted[fingerprint(make_prediction_request(c, pos, spec, default_templates()))] = "I would rather not say";
        }
    }
    mock_backend mock{ 0, scripted };
    const run_result r = run_experiment(c, spec, default_templates(), mock);
    EXPECT_EQ(r.fallback_count, r.predictions.size());
    for (const prediction &p : r.predictions) {
        EXPECT_EQ(p.label, emotion::neutral);
        EXPECT_TRUE(p.fallback);
    }
}

TEST(RunExperiment, FailuresAreCollectedWithFingerprints) {
    const corpus c = load_corpus(fixture("worked_example.json"), true);
    failing_annotator broken;
    experiment_spec spec;
    spec.name = "t";
    const run_result r = run_experiment(c, spec, default_templates(), broken);
    EXPECT_TRUE(r.predictions.empty());
    EXPECT_FALSE(r.failures.empty());
    EXPECT_FALSE(r.evaluation.has_value());
    for (const auto &f : r.failures) {
        EXPECT_EQ(f.kind, failure_kind::exhausted);
        EXPECT_EQ(f.fingerprint.size(), 64u);
    }
    const auto manifest = retry_manifest(r);
    EXPECT_EQ(manifest["failed"].size(), r.failures.size());
    const std::string log = run_log(r);
    EXPECT_NE(log.find("\"event\":\"failure\""), std::string::npos);
    EXPECT_NE(log.find("\"event\":\"summary\""), std::string::npos);
}

TEST(RunExperiment, UnknownTextSource) {
    const corpus c = load_corpus(fixture("worked_example.json"), true);
    mock_backend mock{ 0 };
    experiment_spec spec;
    spec.text_source = "ensemble";
    EXPECT_THROW(run_experiment(c, spec, default_templates(), mock), unknown_text_source);
}

TEST(Predictions, RoundTripAndJoin) {
    const corpus c = fixture_corpus(5, 40);
    mock_backend mock{ 3 };
    experiment_spec spec;
    spec.name = "t";
    const run_result r = run_experiment(c, spec, default_templates(), mock);
    const auto parsed = parse_predictions(nlohmann::json::parse(predictions_json(r).dump()));
    ASSERT_EQ(parsed.size(), r.predictions.size());
    std::size_t unmatched = 7;
    const auto pairs = join_predictions(c, parsed, &unmatched);
    EXPECT_EQ(unmatched, 0u);
    const eval_report again = evaluate(pairs);
    EXPECT_EQ(to_json(again).dump(), to_json(*r.evaluation).dump());

    EXPECT_THROW(parse_predictions(nlohmann::json::parse(R"([{"id": "x", "prediction": "bored"}])")), schema_error);
    EXPECT_THROW(parse_predictions(nlohmann::json::parse(R"([{"prediction": "sad"}])")), schema_error);
    EXPECT_THROW(parse_predictions(nlohmann::json::parse(R"({})")), schema_error);
    join_predictions(c, { { "Ses05Z_99_F999", emotion::sad } }, &unmatched);
    EXPECT_EQ(unmatched, 1u);
}

TEST(Cli, ExitCodes) {
    temp_dir dir;
    EXPECT_EQ(run_cli("validate " + fixture("sample_record.json").string()), 0);
    write_all(dir / "bad.json", R"([{"id": "nope", "speaker": "s", "need_prediction": "no", "whispertiny": "x"}])");
    EXPECT_EQ(run_cli("validate " + (dir / "bad.json").string()), 1);
    EXPECT_EQ(run_cli("validate " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(run_cli("wer --in " + (dir / "missing.json").string()), 2);
    EXPECT_NE(run_cli("frobnicate"), 0);

    // http backend without a key is a backend error
    const std::string run = "env -u OPENAI_API_KEY \"" + std::string{ POSTASR_CLI } + "\" run --corpus " + fixture("worked_example.json").string() +
                            " --out-dir " + (dir / "run").string() + " --no-cache >/dev/null 2>&1";
    const int status = std::system(run.c_str());
    EXPECT_EQ(WEXITSTATUS(status), 3);
}

TEST(Cli, RunEvaluateAndWer) {
    temp_dir dir;
    const std::string corpus_path = (dir / "corpus.json").string();
    ASSERT_EQ(run_cli("gen-fixture --out " + corpus_path + " --seed 21 --records 50"), 0);
    ASSERT_EQ(run_cli("run --corpus " + corpus_path + " --backend mock --mock-seed 4 --out-dir " + (dir / "out").string() + " --cache-dir " +
                      (dir / "cache").string()),
              0);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "predictions.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "run_log.jsonl"));
    EXPECT_FALSE(std::filesystem::exists(dir / "out" / "retry_manifest.json"));
    ASSERT_EQ(run_cli("evaluate --corpus " + corpus_path + " --predictions " + (dir / "out" / "predictions.json").string() + " --eval-out " +
                      (dir / "again.json").string()),
              0);
    EXPECT_EQ(read_all(dir / "again.json"), read_all(dir / "out" / "eval.json"));

    ASSERT_EQ(run_cli("wer --in " + corpus_path + " --wer-out " + (dir / "wer.csv").string()), 0);
    const corpus c = load_corpus(corpus_path, true);
    EXPECT_EQ(read_all(dir / "wer.csv"), to_csv(make_wer_report(c)));
}

TEST(Cli, RefineWritesEnsemble) {
    temp_dir dir;
    ASSERT_EQ(run_cli("refine --in " + fixture("sample_record.json").string() + " --out " + (dir / "r.json").string() + " --selector longest"), 0);
    const corpus c = load_corpus(dir / "r.json", true);
    EXPECT_EQ(c[0].ensemble, "now i suppose i have been bat's going from me");

    const std::string prompt = build_refine_prompt(filter_transcriptions(load_corpus(fixture("sample_record.json"), true)[0], {}));
    const std::string fp = fingerprint({ "gpt-3.5-turbo", prompt, 0.0, refinement_max_tokens });
    write_all(dir / "scripted.json", nlohmann::json{ { fp, "Ya i suppose i have been bht's going from me" } }.dump());
    ASSERT_EQ(run_cli("refine --in " + fixture("sample_record.json").string() + " --out " + (dir / "l.json").string() + " --backend mock --mock-responses " +
                      (dir / "scripted.json").string() + " --no-cache"),
              0);
    EXPECT_EQ(load_corpus(dir / "l.json", true)[0].ensemble, "ya i suppose i have been bht's going from me");
}
