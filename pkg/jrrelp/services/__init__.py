# Corpus-side services
