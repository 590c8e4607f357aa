"""Array and quantity annotation tests"""
