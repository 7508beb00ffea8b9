# Empty file
