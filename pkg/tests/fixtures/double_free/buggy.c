#include <stdlib.h>

void release(char *q)
{
    free(q);
}

int main(void)
{
    char *p = malloc(16);
    if (p == NULL)
        return 1;
    release(p);
    free(p);
    return 0;
}
