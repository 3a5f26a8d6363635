# STB Trust Sim Tests
