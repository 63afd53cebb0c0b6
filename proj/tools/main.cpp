#include <CLI11.hpp>

#include "bioqa/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Biomedical QA and clinical procedure recognition toolkit"};
    app.require_subcommand(1);

    bioqa::cli::Command cmd;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", cmd.config_path, "run configuration file");
        sub->add_option("--set", cmd.overrides,
                        "config override key=value (repeatable)");
    };

    auto* phase_a = app.add_subcommand("run-phase-a",
                                       "Retrieve PubMed documents for a questions file");
    add_config(phase_a);
    phase_a->add_option("-i,--input", cmd.input_path, "questions JSON file")->required();
    phase_a->add_option("-o,--output", cmd.output_path, "submission JSON path")->required();
    phase_a->callback([&] { cmd.verb = "run-phase-a"; });

    auto* phase_b = app.add_subcommand("run-phase-b",
                                       "Generate exact and ideal answers for a questions file");
    add_config(phase_b);
    phase_b->add_option("-i,--input", cmd.input_path, "questions JSON file")->required();
    phase_b->add_option("-o,--output", cmd.output_path, "submission JSON path")->required();
    phase_b->callback([&] { cmd.verb = "run-phase-b"; });

    auto* medproc = app.add_subcommand(
        "run-medprocner", "Extract, link, and index Spanish clinical procedures");
    add_config(medproc);
    medproc->add_option("-i,--input", cmd.input_path, "directory of .txt clinical reports")
        ->required();
    medproc->add_option("-o,--output", cmd.output_path, "output directory")->required();
    medproc->add_option("--gazetteer", cmd.gazetteer_path, "gazetteer TSV")->required();
    medproc->add_option("--examples", cmd.examples_path, "few-shot examples JSON")->required();
    medproc->callback([&] { cmd.verb = "run-medprocner"; });

    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against a gold file");
    add_config(evaluate);
    evaluate->add_option("--task", cmd.task, "phase-a | phase-b | ner | el | indexing")
        ->required();
    evaluate->add_option("--gold", cmd.gold_path, "gold file")->required();
    evaluate->add_option("--pred", cmd.pred_path, "predictions file")->required();
    evaluate->add_option("-o,--output", cmd.output_path, "metric report JSON (optional)");
    evaluate->callback([&] { cmd.verb = "evaluate"; });

    auto* repeat = app.add_subcommand(
        "repeat", "Run a pipeline N times (cache bypassed) and report metric variance");
    add_config(repeat);
    repeat->add_option("-i,--input", cmd.input_path, "questions JSON file (also the gold)")
        ->required();
    repeat->add_option("-o,--output", cmd.output_path, "variance report JSON (optional)");
    repeat->add_option("--times", cmd.times, "number of runs (>= 2)")->required();
    repeat->add_option("--pipeline", cmd.pipeline, "phase-a | phase-b (default phase-a)");
    repeat->callback([&] { cmd.verb = "repeat"; });

    CLI11_PARSE(app, argc, argv);
    return bioqa::cli::run(cmd);
}
