// mock_dock - stand-in docking kernel.
//
//   mock_dock -i <config> -o <outfile>
//
// Reads ligand_atom_file from the config, burns MOCK_DOCK_SECONDS of CPU
// (default 1), then writes <outfile> with the config echoed and a SCORE line
// hashed from the molecule bytes, plus the three ligand output files the
// config names. Exit 1: unreadable config or bad usage. Exit 2: molecule
// missing or not MOL2.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

namespace
{

constexpr std::string_view mol2_marker = "@<TRIPOS>MOLECULE";

bool slurp(const std::string & path, std::string & out)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return false;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  out = buf.str();
  return true;
}

std::uint64_t fnv1a(const std::string & bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double cpu_now()
{
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

void burn(double seconds)
{
  const double until = cpu_now() + seconds;
  volatile std::uint64_t sink = 0;
  while (cpu_now() < until) {
    for (int i = 0; i < 10000; ++i) {
      sink = sink * 6364136223846793005ULL + 1;
    }
  }
}

}  // namespace

int main(int argc, char ** argv)
{
  std::string config_path;
  std::string out_path;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "-i") {
      config_path = argv[i + 1];
    } else if (flag == "-o") {
      out_path = argv[i + 1];
    }
  }
  if (config_path.empty() || out_path.empty() || argc != 5) {
    std::cerr << "usage: mock_dock -i <config> -o <outfile>\n";
    return 1;
  }

  std::string config;
  if (!slurp(config_path, config)) {
    std::cerr << "mock_dock: cannot read config " << config_path << '\n';
    return 1;
  }
  std::map<std::string, std::string> fields;
  std::istringstream lines(config);
  for (std::string line; std::getline(lines, line);) {
    std::istringstream words(line);
    std::string key;
    std::string value;
    if (words >> key >> value) {
      fields.emplace(key, value);
    }
  }

  const auto ligand = fields.find("ligand_atom_file");
  if (ligand == fields.end()) {
    std::cerr << "mock_dock: config has no ligand_atom_file\n";
    return 2;
  }
  std::string molecule;
  if (!slurp(ligand->second, molecule)) {
    std::cerr << "mock_dock: molecule file " << ligand->second << " is missing\n";
    return 2;
  }
  if (molecule.compare(0, mol2_marker.size(), mol2_marker) != 0) {
    std::cerr << "mock_dock: " << ligand->second << " is not a MOL2 record\n";
    return 2;
  }

  double seconds = 1.0;
  if (const char * env = std::getenv("MOCK_DOCK_SECONDS")) {
    seconds = std::strtod(env, nullptr);
  }
  if (seconds > 0) {
    burn(seconds);
  }

  char score[40];
  std::snprintf(score, sizeof(score), "SCORE %016llx\n", static_cast<unsigned long long>(fnv1a(molecule)));
  std::ofstream out(out_path, std::ios::binary);
  out << config;
  if (!config.empty() && config.back() != '\n') {
    out << '\n';
  }
  out << score;
  if (!out) {
    std::cerr << "mock_dock: cannot write " << out_path << '\n';
    return 1;
  }
  for (const char * key : {"ligand_contact_file", "ligand_chemical_file", "ligand_energy_file"}) {
    auto it = fields.find(key);
    if (it == fields.end()) {
      continue;
    }
    std::ofstream f(it->second, std::ios::binary);
    f << "# " << key << '\n' << score << molecule;
    if (!f) {
      std::cerr << "mock_dock: cannot write " << it->second << '\n';
      return 1;
    }
  }
  return 0;
}
