#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>

#include <bodybench/acceptance.hpp>

// acceptance [--quick] [--only N]... [--jobs N]
int main(int argc, char** argv) {
  bodybench::AcceptanceOptions opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--quick") {
      opt.quick = true;
    } else if ((a == "--only" || a == "--jobs") && i + 1 < argc) {
      char* end = nullptr;
      const long v = std::strtol(argv[++i], &end, 10);
      if (*end != '\0' || v < 1) {
        std::cerr << "acceptance: bad value for " << a << "\n";
        return 2;
      }
      (a == "--only" ? opt.only.push_back(static_cast<int>(v)) : void(opt.jobs = static_cast<int>(v)));
    } else {
      std::cerr << "usage: acceptance [--quick] [--only N]... [--jobs N]\n";
      return 2;
    }
  }
  opt.on_result = [](const bodybench::CheckResult& r) { std::cout << bodybench::format_check(r) << std::endl; };
  bool ok = true;
  for (const auto& r : bodybench::run_acceptance(opt)) ok = ok && r.pass;
  return ok ? 0 : 1;
}
