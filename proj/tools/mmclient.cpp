// mmclient - fetch one molecule record and save it as <n>.mol2.
#include "vlab/cdb/client.hpp"
#include "vlab/digest.hpp"

#include <charconv>
#include <iostream>
#include <string_view>

int main(int argc, char ** argv)
{
  if (argc != 5) {
    std::cerr << "usage: mmclient <host> <port> <database> <n>\n";
    return 1;
  }
  std::uint16_t port = 0;
  std::uint64_t n = 0;
  const std::string_view port_text = argv[2];
  const std::string_view n_text = argv[4];
  if (std::from_chars(port_text.data(), port_text.data() + port_text.size(), port).ptr != port_text.data() + port_text.size() ||
      std::from_chars(n_text.data(), n_text.data() + n_text.size(), n).ptr != n_text.data() + n_text.size()) {
    std::cerr << "mmclient: port and molecule number must be integers\n";
    return 1;
  }
  try {
    const auto record = vlab::cdb::fetch(vlab::cdb::Endpoint{argv[1], port}, argv[3], n);
    vlab::write_file(std::to_string(n) + ".mol2", record.bytes);
  } catch (const std::exception & e) {
    std::cerr << "mmclient: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
