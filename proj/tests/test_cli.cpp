// End-to-end checks of the command-line tool. Invoked as:
//   test_cli <path-to-eventfuse-binary>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
  if (ok) {
    std::cout << "  ok: " << what << "\n";
  } else {
    ++g_failures;
    std::cout << "  FAILED: " << what << "\n";
  }
}

int run(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: test_cli <eventfuse binary>\n";
    return 2;
  }
  const std::string bin = argv[1];
  const fs::path dir =
      fs::temp_directory_path() / ("eventfuse-cli-" + std::to_string(getpid()));
  fs::create_directories(dir);
  setenv("EVENTFUSE_OUT_DIR", dir.c_str(), 1);
  const std::string quiet = " > " + (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();

  // Small widths keep the whole suite in the sub-minute range.
  const fs::path cfg_path = dir / "config.json";
  {
    Json cfg = {{"T", 16},       {"M", 3},          {"K", 4},
                {"d_raw", 8},    {"d_v", 6},        {"d1", 3},
                {"d2", 6},       {"d_nv", 10},      {"d_f", 6},
                {"learning_rate", 2e-3},            {"batch_size", 4},
                {"epochs", 4},   {"val_fraction", 0.25}, {"seed", 11}};
    std::ofstream(cfg_path) << cfg.dump(2);
  }
  const std::string base = bin + " --config " + cfg_path.string();

  std::cout << "synth determinism\n";
  const fs::path data_a = dir / "a.jsonl";
  const fs::path data_b = dir / "b.jsonl";
  check(run(base + " synth --out " + data_a.string() +
            " --count 32 --segments 3 --noise 0.1" + quiet) == 0,
        "synth exits 0");
  check(run(base + " synth --out " + data_b.string() +
            " --count 32 --segments 3 --noise 0.1" + quiet) == 0,
        "second synth exits 0");
  check(slurp(data_a) == slurp(data_b), "same seed gives byte-identical data");
  check(!slurp(data_a).empty(), "dataset is non-empty");

  std::cout << "synth edge cases\n";
  const fs::path empty_path = dir / "empty.jsonl";
  check(run(base + " synth --out " + empty_path.string() + " --count 0" +
            quiet) == 0,
        "count 0 exits 0");
  check(fs::file_size(empty_path) == 0, "count 0 writes an empty file");
  check(run(base + " synth --out " + (dir / "x.jsonl").string() +
            " --count 1 --segments 20" + quiet) == 2,
        "segments > T exits 2");

  std::cout << "train and eval\n";
  const fs::path run_dir = dir / "run";
  check(run(base + " train --data " + data_a.string() + " --out " +
            run_dir.string() + quiet) == 0,
        "train exits 0");
  check(fs::exists(run_dir / "checkpoint.json"), "checkpoint written");
  check(fs::exists(run_dir / "train_report.json"), "report written");
  check(fs::exists(run_dir / "manifest.json"), "manifest written");

  const std::string data_hash_before = slurp(data_a);
  const fs::path eval_out = dir / "eval1.json";
  check(run(bin + " eval --data " + data_a.string() + " --checkpoint " +
            (run_dir / "checkpoint.json").string() + " --out " +
            eval_out.string() + quiet) == 0,
        "eval exits 0");
  check(slurp(data_a) == data_hash_before, "eval does not mutate its input");

  // With no held-out split the train split is the whole file, so a fresh
  // eval over the same file must equal the report's final train metrics.
  const fs::path full_cfg = dir / "config_noval.json";
  {
    Json cfg = Json::parse(slurp(cfg_path));
    cfg["val_fraction"] = 0.0;
    std::ofstream(full_cfg) << cfg.dump(2);
  }
  const fs::path run2 = dir / "run2";
  check(run(bin + " --config " + full_cfg.string() + " train --data " +
            data_a.string() + " --out " + run2.string() + quiet) == 0,
        "train without validation split exits 0");
  const fs::path eval2 = dir / "eval2.json";
  check(run(bin + " eval --data " + data_a.string() + " --checkpoint " +
            (run2 / "checkpoint.json").string() + " --out " + eval2.string() +
            quiet) == 0,
        "eval after train exits 0");
  {
    const Json report = Json::parse(slurp(run2 / "train_report.json"));
    const Json metrics = Json::parse(slurp(eval2));
    check(report.at("final_train") == metrics,
          "eval on the train split equals the report's final train metrics");
  }

  std::cout << "eval determinism and shape mismatch\n";
  const fs::path eval3 = dir / "eval3.json";
  check(run(bin + " eval --data " + data_a.string() + " --checkpoint " +
            (run_dir / "checkpoint.json").string() + " --out " +
            eval3.string() + quiet) == 0,
        "repeat eval exits 0");
  check(slurp(eval_out) == slurp(eval3), "repeated eval is identical");

  const fs::path narrow_cfg = dir / "config_narrow.json";
  {
    Json cfg = Json::parse(slurp(cfg_path));
    cfg["d_v"] = 4;
    std::ofstream(narrow_cfg) << cfg.dump(2);
  }
  check(run(bin + " --config " + narrow_cfg.string() + " eval --data " +
            data_a.string() + " --checkpoint " +
            (run_dir / "checkpoint.json").string() + quiet) == 2,
        "checkpoint/config width mismatch exits 2");
  {
    const std::string err = slurp(dir / "stderr.txt");
    check(err.find("visual_stub") != std::string::npos,
          "mismatch names the parameter");
  }

  std::cout << "inspect\n";
  const fs::path dump_path = dir / "dump.json";
  check(run(bin + " inspect --data " + data_a.string() +
            " --sample-id synth-000003 --checkpoint " +
            (run_dir / "checkpoint.json").string() + " --out " +
            dump_path.string() + quiet) == 0,
        "inspect exits 0");
  {
    Json dump;
    bool parsed = true;
    try {
      dump = Json::parse(slurp(dump_path));
    } catch (...) {
      parsed = false;
    }
    check(parsed, "inspect output parses as JSON");
    if (parsed) {
      check(dump.contains("visual") &&
                dump.at("visual").contains("density_profile") &&
                dump.at("visual").contains("event_set"),
            "dump has the visual clustering keys");
      check(dump.contains("nonvisual"), "dump has the non-visual branch");
      check(dump.contains("attention_trace") &&
                dump.at("attention_trace").contains("alpha_visual") &&
                dump.at("attention_trace").contains("lambda1") &&
                dump.at("attention_trace").contains("probability"),
            "dump has the attention trace keys");
      const Json& events = dump.at("visual").at("event_set");
      check(events.contains("centers") && events.contains("assignment") &&
                events.contains("events") && events.contains("member_counts"),
            "event set has its declared keys");
    }
  }
  check(run(bin + " inspect --data " + data_a.string() +
            " --sample-id no-such-id --checkpoint " +
            (run_dir / "checkpoint.json").string() + quiet) == 2,
        "unknown sample id exits 2");

  std::cout << "sweep\n";
  const fs::path sweep_cfg = dir / "config_sweep.json";
  {
    Json cfg = Json::parse(slurp(cfg_path));
    cfg["epochs"] = 1;
    std::ofstream(sweep_cfg) << cfg.dump(2);
  }
  const fs::path sweep_out = dir / "sweep.json";
  check(run(bin + " --config " + sweep_cfg.string() + " sweep-m --data " +
            data_a.string() + " --m-list 2 3 --out " + sweep_out.string() +
            quiet) == 0,
        "sweep-m exits 0");
  {
    const Json table = Json::parse(slurp(sweep_out));
    check(table.is_array() && table.size() == 2, "sweep table has one row per M");
    check(table[0].at("M") == 2 && table[1].at("M") == 3,
          "sweep rows echo the m-list");
  }

  std::cout << "missing file handling\n";
  check(run(bin + " eval --data /no/such.jsonl --checkpoint " +
            (run_dir / "checkpoint.json").string() + quiet) == 3,
        "missing dataset exits 3");

  fs::remove_all(dir);
  if (g_failures > 0) {
    std::cout << g_failures << " failure(s)\n";
    return 1;
  }
  std::cout << "all cli checks passed\n";
  return 0;
}
