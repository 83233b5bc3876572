#ifndef SSREC_SSREC_HPP
#define SSREC_SSREC_HPP

#include "ssrec/types.hpp"
#include "ssrec/domain.hpp"
#include "ssrec/hmm.hpp"
#include "ssrec/bihmm.hpp"
#include "ssrec/expansion.hpp"
#include "ssrec/scoring.hpp"
#include "ssrec/hash_table.hpp"
#include "ssrec/signature_tree.hpp"
#include "ssrec/cppse_index.hpp"
#include "ssrec/snapshot.hpp"
#include "ssrec/config.hpp"
#include "ssrec/synthetic.hpp"
#include "ssrec/harness.hpp"

#endif  // SSREC_SSREC_HPP
