// train --model-config m.json --train-config t.json --data corpus.tokens
//       --out rundir/ [--resume rundir/ckpt_000100.bin]

#include <iostream>
#include <string>

#include "cli_util.hpp"
#include "toba/config_io.hpp"
#include "toba/train.hpp"

using namespace toba;

int main(int argc, char** argv) {
  CLI::App app{"Train the backbone, with or without the engram layer"};
  std::string model_path, train_path, data_path, out_dir, resume;
  std::size_t seq = 0;
  app.add_option("--model-config", model_path, "Model config JSON")->required();
  app.add_option("--train-config", train_path, "Training config JSON")->required();
  app.add_option("--data", data_path, "Token file, one document per line")->required();
  app.add_option("--out", out_dir, "Run directory")->required();
  app.add_option("--resume", resume, "Checkpoint to resume from");
  app.add_option("--seq", seq, "Window length (default: context_len)");
  CLI11_PARSE(app, argc, argv);

  return cli::guarded("train", [&] {
    const auto mcfg = model_config_from_json(read_json_file(model_path));
    const auto tcfg = train_config_from_json(read_json_file(train_path));
    const train::TokenDataset data(train::TokenDataset::read_documents(data_path),
                                   seq ? seq : mcfg.context_len);
    train::RunOptions opts;
    opts.out_dir = out_dir;
    if (!resume.empty()) opts.resume_from = resume;
    try {
      const auto r = train::run_training(mcfg, tcfg, data, opts);
      if (!r.records.empty()) {
        const auto& last = r.records.back();
        std::cerr << "train: " << r.records.size() << " records, step " << last.step
                  << " loss " << last.loss << "\n";
      }
      std::cerr << "train: " << r.checkpoints.size() << " checkpoints in " << out_dir << "\n";
    } catch (const NumericalDivergence& e) {
      std::cerr << "train: diverged: " << e.what() << "\n";
      return 3;
    }
    return 0;
  });
}
