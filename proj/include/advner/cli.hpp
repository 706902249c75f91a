#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace advner::cli {

// Exit-code contract: 0 success, 2 config error, 3 data error, 4 numerical
// abort, 1 anything else (including gradcheck failures and checkpoint
// integrity errors).
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              std::ostream& out, std::ostream& err);

int cmd_eval(const std::string& checkpoint_dir, const std::string& test_path,
             const std::string& report_path, std::ostream& out, std::ostream& err);

int cmd_predict(const std::string& checkpoint_dir, const std::string& input_path,
                const std::string& output_path, std::ostream& out, std::ostream& err);

int cmd_synth(const std::string& config_path, const std::vector<std::string>& overrides,
              std::ostream& out, std::ostream& err);

int cmd_experiment(const std::string& config_path,
                   const std::vector<std::string>& overrides, std::ostream& out,
                   std::ostream& err);

// Finite-difference check of every op plus the joint adversarial objective;
// prints one line per check, returns nonzero if any exceeds the tolerance.
int cmd_gradcheck(std::ostream& out, std::ostream& err, double tolerance = 1e-3);

int run(int argc, char** argv);

}  // namespace advner::cli
